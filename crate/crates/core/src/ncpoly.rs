//! Non-classical polynomials `K^n → T` in explicit coefficient form.
//!
//! A polynomial of degree at most `d` is
//!
//! ```text
//! P(x) = θ + Σ_k Σ_{d_ij} c_{d,k} · Π_{i,j} |Tr(α_j x_i)|^{d_ij} / p^{k+1}   (mod 1)
//! ```
//!
//! with `0 ≤ d_ij < p`, `0 < Σ d_ij ≤ d − k(p−1)` and `c ∈ {0..p-1}`. All
//! evaluation is exact integer arithmetic modulo `p^M`; floating point only
//! enters through [`phase`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain_fn::{DenseFn, Domain};
use crate::error::{Error, Result};
use crate::field::{advance_digits, Field, FieldSpec};
use crate::util::{binomial, check_budget, derive_seed, pow_sat, rng_from_seed};

/// Number of sampled tuples used when exhaustive degree certification is over budget.
pub const SAMPLED_CERTIFICATION_TUPLES: usize = 10_000;

/// An element `numerator / p^log_denominator` of `T = R/Z`, kept in lowest terms.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TorusValue {
    numerator: u64,
    log_denominator: u32,
    p: u32,
}

impl fmt::Debug for TorusValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}^{}", self.numerator, self.p, self.log_denominator)
    }
}

impl TorusValue {
    pub fn zero(p: u32) -> Self {
        TorusValue {
            numerator: 0,
            log_denominator: 0,
            p,
        }
    }

    /// `numerator / p^log_denominator mod 1`, reduced to lowest terms.
    pub fn new(numerator: u64, log_denominator: u32, p: u32) -> Self {
        let modulus = (p as u64).pow(log_denominator);
        let mut v = TorusValue {
            numerator: numerator % modulus,
            log_denominator,
            p,
        };
        v.reduce();
        v
    }

    fn reduce(&mut self) {
        let p = self.p as u64;
        if self.numerator == 0 {
            self.log_denominator = 0;
            return;
        }
        while self.log_denominator > 0 && self.numerator.is_multiple_of(p) {
            self.numerator /= p;
            self.log_denominator -= 1;
        }
    }

    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    pub fn log_denominator(&self) -> u32 {
        self.log_denominator
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn is_zero(&self) -> bool {
        self.numerator == 0
    }

    /// Numerator over the common denominator `p^log_den` (`log_den` must be large enough).
    pub fn numerator_at(&self, log_den: u32) -> u64 {
        debug_assert!(log_den >= self.log_denominator);
        self.numerator * (self.p as u64).pow(log_den - self.log_denominator)
    }

    /// Representative in `[0, 1)`.
    pub fn to_f64(&self) -> f64 {
        self.numerator as f64 / (self.p as f64).powi(self.log_denominator as i32)
    }
}

impl Add for TorusValue {
    type Output = TorusValue;

    fn add(self, other: TorusValue) -> TorusValue {
        let m = self.log_denominator.max(other.log_denominator);
        TorusValue::new(self.numerator_at(m) + other.numerator_at(m), m, self.p)
    }
}

impl Neg for TorusValue {
    type Output = TorusValue;

    fn neg(self) -> TorusValue {
        let modulus = (self.p as u64).pow(self.log_denominator);
        TorusValue::new(modulus - self.numerator, self.log_denominator, self.p)
    }
}

impl Sub for TorusValue {
    type Output = TorusValue;

    fn sub(self, other: TorusValue) -> TorusValue {
        self + -other
    }
}

/// A `T`-valued table on `K^n` with common denominator `p^log_den`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusTable {
    domain: Domain,
    log_den: u32,
    values: Vec<u64>,
}

impl TorusTable {
    pub fn new(domain: Domain, log_den: u32, values: Vec<u64>) -> Result<Self> {
        if values.len() != domain.size() {
            return Err(Error::DimensionMismatch("torus table length".into()));
        }
        let modulus = (domain.field().p() as u64).pow(log_den);
        Ok(TorusTable {
            domain,
            log_den,
            values: values.into_iter().map(|v| v % modulus).collect(),
        })
    }

    pub fn zeros(domain: &Domain) -> Self {
        TorusTable {
            domain: domain.clone(),
            log_den: 0,
            values: vec![0; domain.size()],
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn log_den(&self) -> u32 {
        self.log_den
    }

    /// Raw numerators over `p^log_den`.
    pub fn numerators(&self) -> &[u64] {
        &self.values
    }

    fn modulus(&self) -> u64 {
        (self.domain.field().p() as u64).pow(self.log_den)
    }

    pub fn get(&self, x: usize) -> TorusValue {
        TorusValue::new(self.values[x], self.log_den, self.domain.field().p())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Same function over the larger denominator `p^log_den`.
    pub fn rescaled(&self, log_den: u32) -> TorusTable {
        assert!(log_den >= self.log_den);
        let factor = (self.domain.field().p() as u64).pow(log_den - self.log_den);
        TorusTable {
            domain: self.domain.clone(),
            log_den,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Pointwise sum; the result uses the larger denominator.
    pub fn add(&self, other: &TorusTable) -> Result<TorusTable> {
        if self.domain != other.domain {
            return Err(Error::DimensionMismatch("torus tables on different domains".into()));
        }
        let m = self.log_den.max(other.log_den);
        let (a, b) = (self.rescaled(m), other.rescaled(m));
        let modulus = a.modulus();
        Ok(TorusTable {
            domain: a.domain.clone(),
            log_den: m,
            values: a.values.iter().zip(&b.values).map(|(x, y)| (x + y) % modulus).collect(),
        })
    }

    /// Equality as functions into `T`, regardless of the stored denominators.
    pub fn same_function(&self, other: &TorusTable) -> bool {
        if self.domain != other.domain {
            return false;
        }
        let m = self.log_den.max(other.log_den);
        self.rescaled(m).values == other.rescaled(m).values
    }

    /// `x ↦ self(σ(x))` for a point map `σ`.
    pub fn precompose(&self, point_map: &[usize]) -> TorusTable {
        TorusTable {
            domain: self.domain.clone(),
            log_den: self.log_den,
            values: point_map.iter().map(|&y| self.values[y]).collect(),
        }
    }

    /// Smallest denominator exponent that represents this table exactly.
    pub fn normalized(&self) -> TorusTable {
        let p = self.domain.field().p() as u64;
        let mut out = self.clone();
        while out.log_den > 0 && out.values.iter().all(|v| v % p == 0) {
            out.values.iter_mut().for_each(|v| *v /= p);
            out.log_den -= 1;
        }
        out
    }

    pub fn to_phase(&self) -> DenseFn {
        let den = self.modulus() as f64;
        DenseFn::from_fn(&self.domain, |x| {
            num_complex::Complex64::from_polar(1.0, std::f64::consts::TAU * self.values[x] as f64 / den)
        })
    }
}

/// `(D_h f)(x) = f(x+h) − f(x)`, exactly.
pub fn additive_diff(table: &TorusTable, h: usize) -> Result<TorusTable> {
    let d = &table.domain;
    if h >= d.size() {
        return Err(Error::DimensionMismatch(format!("shift {h} outside K^{}", d.n())));
    }
    let modulus = table.modulus();
    let values = d
        .points()
        .map(|x| (table.values[d.add(x, h)] + modulus - table.values[x]) % modulus)
        .collect();
    Ok(TorusTable {
        domain: d.clone(),
        log_den: table.log_den,
        values,
    })
}

/// Index of one coefficient in the coefficient form: exponents `d_ij`
/// (row `i`, column `j`, flattened row-major) and depth `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermKey {
    pub depth: u32,
    pub exponents: Vec<u32>,
}

impl TermKey {
    pub fn total_degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// The degree this term contributes: `Σ d_ij + k(p−1)`.
    pub fn degree(&self, p: u32) -> u32 {
        self.total_degree() + self.depth * (p - 1)
    }
}

/// A non-classical polynomial in coefficient form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NCPoly {
    domain: Domain,
    degree_bound: u32,
    theta: TorusValue,
    terms: BTreeMap<TermKey, u32>,
}

impl NCPoly {
    /// Validates every key against the index constraints for degree ≤ `degree_bound`.
    pub fn new(
        domain: &Domain,
        degree_bound: u32,
        theta: TorusValue,
        terms: impl IntoIterator<Item = (TermKey, u32)>,
    ) -> Result<Self> {
        let p = domain.field().p();
        let width = domain.n() * domain.field().t();
        if theta.p != p {
            return Err(Error::InvalidArgument("theta uses a different prime".into()));
        }
        let mut map = BTreeMap::new();
        for (key, c) in terms {
            if key.exponents.len() != width {
                return Err(Error::DegreeConstraint(format!(
                    "term has {} exponents, expected n·t = {width}",
                    key.exponents.len()
                )));
            }
            if key.exponents.iter().any(|&e| e >= p) {
                return Err(Error::DegreeConstraint("exponent d_ij must be below p".into()));
            }
            let total = key.total_degree() as i64;
            let cap = degree_bound as i64 - key.depth as i64 * (p as i64 - 1);
            if total == 0 || total > cap {
                return Err(Error::DegreeConstraint(format!(
                    "term {key:?} needs 0 < Σd ≤ {cap} for degree ≤ {degree_bound}"
                )));
            }
            if c >= p {
                return Err(Error::DegreeConstraint(format!("coefficient {c} not below p = {p}")));
            }
            if c != 0 {
                map.insert(key, c);
            }
        }
        Ok(NCPoly {
            domain: domain.clone(),
            degree_bound,
            theta,
            terms: map,
        })
    }

    pub fn zero(domain: &Domain) -> Self {
        NCPoly {
            domain: domain.clone(),
            degree_bound: 0,
            theta: TorusValue::zero(domain.field().p()),
            terms: BTreeMap::new(),
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn degree_bound(&self) -> u32 {
        self.degree_bound
    }

    pub fn theta(&self) -> TorusValue {
        self.theta
    }

    pub fn terms(&self) -> &BTreeMap<TermKey, u32> {
        &self.terms
    }

    pub fn max_depth(&self) -> Option<u32> {
        self.terms.keys().map(|k| k.depth).max()
    }

    /// Denominator exponent shared by every value of the polynomial.
    pub fn log_den(&self) -> u32 {
        let terms = self.max_depth().map_or(0, |k| k + 1);
        terms.max(self.theta.log_denominator)
    }

    fn eval_numerator(&self, digits: &[u32], log_den: u32) -> u64 {
        let p = self.domain.field().p() as u64;
        let modulus = p.pow(log_den);
        let mut acc = self.theta.numerator_at(log_den) % modulus;
        for (key, &c) in &self.terms {
            let mut prod = c as u64;
            for (&d, &e) in digits.iter().zip(&key.exponents) {
                if e > 0 {
                    prod = prod * (d as u64).pow(e) % modulus;
                }
            }
            let weight = p.pow(log_den - key.depth - 1);
            acc = (acc + prod * weight) % modulus;
        }
        acc
    }

    /// Exact value at the point with index `x`.
    pub fn eval(&self, x: usize) -> TorusValue {
        let log_den = self.log_den();
        let num = self.eval_numerator(&self.domain.trace_digits(x), log_den);
        TorusValue::new(num, log_den, self.domain.field().p())
    }

    pub fn eval_table(&self) -> TorusTable {
        let log_den = self.log_den();
        let values = self
            .domain
            .points()
            .map(|x| self.eval_numerator(&self.domain.trace_digits(x), log_den))
            .collect();
        TorusTable {
            domain: self.domain.clone(),
            log_den,
            values,
        }
    }
}

/// `e(P) = exp(2πi P)` as a table; unit modulus everywhere.
pub fn phase(poly: &NCPoly) -> DenseFn {
    poly.eval_table().to_phase()
}

// All d-fold differences D_{h_1}..D_{h_depth} of `table` vanish.
fn differences_vanish(table: &TorusTable, depth: u32) -> bool {
    if depth == 0 {
        return table.is_zero();
    }
    // D_0 is identically zero, so h = 0 never witnesses a nonzero difference.
    table
        .domain
        .points()
        .skip(1)
        .all(|h| differences_vanish(&additive_diff(table, h).unwrap(), depth - 1))
}

/// Exhaustive test of `deg P < d`: every `d`-fold difference vanishes.
/// Charges `q^{n(d+1)}` terms against `budget`.
pub fn degree_certify(poly: &NCPoly, d: u32, budget: u128) -> Result<bool> {
    degree_certify_table(&poly.eval_table(), d, budget)
}

/// [`degree_certify`] for an arbitrary table.
pub fn degree_certify_table(table: &TorusTable, d: u32, budget: u128) -> Result<bool> {
    let size = table.domain.size();
    check_budget(pow_sat(size as u128, d as u64 + 1), budget)?;
    if d == 0 {
        return Ok(table.is_zero());
    }
    Ok((1..size)
        .into_par_iter()
        .all(|h| differences_vanish(&additive_diff(table, h).unwrap(), d - 1)))
}

/// Probabilistic test of `deg P < d` on `samples` uniform tuples `(x, h_1..h_d)`.
pub fn degree_certify_sampled(poly: &NCPoly, d: u32, samples: usize, seed: u64) -> bool {
    let table = poly.eval_table();
    let dom = &table.domain;
    let modulus = table.modulus();
    let mut rng = rng_from_seed(derive_seed(seed, d as u64));
    let mut hs = vec![0usize; d as usize];
    (0..samples).all(|_| {
        let x = rng.gen_range(0..dom.size());
        for h in hs.iter_mut() {
            *h = rng.gen_range(0..dom.size());
        }
        let mut acc = 0u64;
        for omega in 0u32..(1 << d) {
            let mut pt = x;
            for (j, &h) in hs.iter().enumerate() {
                if omega >> j & 1 == 1 {
                    pt = dom.add(pt, h);
                }
            }
            let v = table.values[pt];
            // sign (-1)^{d - |ω|}
            if (d - omega.count_ones()).is_multiple_of(2) {
                acc = (acc + v) % modulus;
            } else {
                acc = (acc + modulus - v) % modulus;
            }
        }
        acc == 0
    })
}

/// How a degree certificate was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificationMode {
    Exhaustive,
    Probabilistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeCertificate {
    pub holds: bool,
    pub mode: CertificationMode,
}

/// Exhaustive certification when within budget, otherwise
/// [`SAMPLED_CERTIFICATION_TUPLES`] sampled tuples labelled probabilistic.
pub fn certify_degree(poly: &NCPoly, d: u32, budget: u128, seed: u64) -> DegreeCertificate {
    match degree_certify(poly, d, budget) {
        Ok(holds) => DegreeCertificate {
            holds,
            mode: CertificationMode::Exhaustive,
        },
        Err(_) => DegreeCertificate {
            holds: degree_certify_sampled(poly, d, SAMPLED_CERTIFICATION_TUPLES, seed),
            mode: CertificationMode::Probabilistic,
        },
    }
}

/// All term keys for degree ≤ `max_degree`, ordered by depth, then total
/// degree, then exponent tuple in odometer order.
pub fn term_keys(field: &Field, n: usize, max_degree: u32) -> Vec<TermKey> {
    let p = field.p();
    let width = n * field.t();
    let mut keys = Vec::new();
    let mut depth = 0u32;
    while (max_degree as i64) - (depth as i64) * (p as i64 - 1) >= 1 {
        let cap = max_degree - depth * (p - 1);
        let mut bucket: Vec<TermKey> = Vec::new();
        let mut exps = vec![0u32; width];
        while advance_digits(&mut exps, p) {
            let total: u32 = exps.iter().sum();
            if total <= cap {
                bucket.push(TermKey {
                    depth,
                    exponents: exps.clone(),
                });
            }
        }
        bucket.sort_by_key(|k| k.total_degree());
        keys.extend(bucket);
        depth += 1;
        if p == 1 {
            break;
        }
    }
    keys
}

/// Upper bound `C(nt+r−1, r−1) · r` on the number of coefficients of a
/// degree-`<r` polynomial with zero constant term.
pub fn coefficient_count_bound(_p: u32, t: usize, n: usize, r: u32) -> u128 {
    binomial((n * t) as u64 + r as u64 - 1, r as u64 - 1) * r as u128
}

/// Every distinct function `K^n → T` of degree `< r` with zero constant term,
/// in first-appearance order of the coefficient enumeration.
pub fn enumerate_ncpolys(domain: &Domain, r: u32, budget: u128) -> Result<Vec<NCPoly>> {
    if r == 0 {
        return Err(Error::InvalidArgument("degree bound r must be at least 1".into()));
    }
    let field = domain.field();
    let p = field.p();
    let keys = term_keys(field, domain.n(), r - 1);
    let space = pow_sat(p as u128, keys.len() as u64);
    check_budget(space, budget)?;
    let log_den = keys.iter().map(|k| k.depth + 1).max().unwrap_or(0);
    let modulus = (p as u64).pow(log_den);
    let basis_tables: Vec<Vec<u64>> = keys
        .iter()
        .map(|key| {
            let single = NCPoly::new(domain, r - 1, TorusValue::zero(p), [(key.clone(), 1)]).unwrap();
            single.eval_table().rescaled(log_den).values
        })
        .collect();

    const BLOCK: usize = 4096;
    let space = space as usize;
    let blocks = space.div_ceil(BLOCK);
    let size = domain.size();
    let key_count = keys.len();
    let coeff_digits = |idx: usize| -> Vec<u32> {
        let mut rest = idx;
        (0..key_count)
            .map(|_| {
                let c = (rest % p as usize) as u32;
                rest /= p as usize;
                c
            })
            .collect()
    };
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut polys = Vec::new();
    // Blocks are computed in parallel and merged in order, so the first
    // coefficient vector realising each function is the one kept.
    let per_block: Vec<Vec<(usize, Vec<u64>)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut local: HashSet<Vec<u64>> = HashSet::new();
            let mut out = Vec::new();
            for idx in b * BLOCK..((b + 1) * BLOCK).min(space) {
                let coeffs = coeff_digits(idx);
                let mut table = vec![0u64; size];
                for (c, basis) in coeffs.iter().zip(&basis_tables) {
                    if *c != 0 {
                        for (v, &bv) in table.iter_mut().zip(basis) {
                            *v = (*v + *c as u64 * bv) % modulus;
                        }
                    }
                }
                if local.insert(table.clone()) {
                    out.push((idx, table));
                }
            }
            out
        })
        .collect();
    for (idx, table) in per_block.into_iter().flatten() {
        if seen.insert(table) {
            let coeffs = coeff_digits(idx);
            let terms = keys.iter().cloned().zip(coeffs);
            polys.push(NCPoly::new(domain, r - 1, TorusValue::zero(p), terms)?);
        }
    }
    Ok(polys)
}

/// A classical polynomial `K^n → K`: monomial exponent vectors to coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassicalPoly {
    pub terms: BTreeMap<Vec<u32>, crate::field::FieldElem>,
}

impl ClassicalPoly {
    pub fn new(terms: impl IntoIterator<Item = (Vec<u32>, crate::field::FieldElem)>) -> Self {
        ClassicalPoly {
            terms: terms.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
        }
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, field: &Field, x: &[crate::field::FieldElem]) -> crate::field::FieldElem {
        let mut acc = crate::field::FieldElem::ZERO;
        for (exps, &c) in &self.terms {
            let mut term = c;
            for (&xi, &e) in x.iter().zip(exps) {
                term = field.mul(term, field.pow(xi, e as u64));
            }
            acc = field.add(acc, term);
        }
        acc
    }
}

fn invert_mod_p(m: &[Vec<u64>], p: u64) -> Vec<Vec<u64>> {
    let n = m.len();
    let inv = |a: u64| (1..p).find(|&b| a * b % p == 1).unwrap();
    let mut a: Vec<Vec<u64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| u64::from(i == j)));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_multiple_of(p)).expect("Vandermonde is invertible");
        a.swap(col, piv);
        let s = inv(a[col][col]);
        for x in a[col].iter_mut() {
            *x = *x * s % p;
        }
        for r in 0..n {
            if r != col && a[r][col] != 0 {
                let f = a[r][col];
                let pivot = a[col].clone();
                for (x, &v) in a[r].iter_mut().zip(&pivot) {
                    *x = (*x + (p - f) * v) % p;
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Rewrites `x ↦ |Tr(P(x))| / p` in coefficient form at depth 0.
///
/// The coordinates `y_ij = Tr(α_j x_i)` identify `K^n` with `F_p^{nt}`, so the
/// function has a unique reduced polynomial in the `y_ij`; it is found by
/// inverting the Vandermonde transform along each coordinate.
pub fn from_classical(domain: &Domain, poly: &ClassicalPoly, degree_bound: u32) -> Result<NCPoly> {
    let field = domain.field();
    let p = field.p() as u64;
    let width = domain.n() * field.t();
    if poly.terms.keys().any(|e| e.len() != domain.n()) {
        return Err(Error::DimensionMismatch("monomial arity differs from n".into()));
    }
    let size = domain.size();
    let digit_index = |digits: &[u32]| digits.iter().rev().fold(0usize, |acc, &d| acc * p as usize + d as usize);
    let mut table = vec![u64::MAX; size];
    for x in domain.points() {
        let y = digit_index(&domain.trace_digits(x));
        table[y] = field.abs_trace(poly.eval(field, &domain.coords(x))) as u64;
    }
    debug_assert!(table.iter().all(|&v| v != u64::MAX));

    let vandermonde: Vec<Vec<u64>> = (0..p)
        .map(|y| (0..p).map(|e| if e == 0 { 1 } else { y.pow(e as u32) % p }).collect())
        .collect();
    let inverse = invert_mod_p(&vandermonde, p);
    let mut coeffs = table;
    let mut stride = 1usize;
    for _ in 0..width {
        let mut next = coeffs.clone();
        for base in 0..size {
            if !(base / stride).is_multiple_of(p as usize) {
                continue;
            }
            for e in 0..p as usize {
                let mut acc = 0u64;
                for y in 0..p as usize {
                    acc = (acc + inverse[e][y] * coeffs[base + y * stride]) % p;
                }
                next[base + e * stride] = acc;
            }
        }
        coeffs = next;
        stride *= p as usize;
    }

    let mut theta = TorusValue::zero(p as u32);
    let mut terms = Vec::new();
    for (idx, &c) in coeffs.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mut rest = idx;
        let exponents: Vec<u32> = (0..width)
            .map(|_| {
                let e = (rest % p as usize) as u32;
                rest /= p as usize;
                e
            })
            .collect();
        if exponents.iter().all(|&e| e == 0) {
            theta = TorusValue::new(c, 1, p as u32);
            continue;
        }
        let total: u32 = exponents.iter().sum();
        if total > degree_bound {
            return Err(Error::DegreeConstraint(format!(
                "trace form has degree {total} > {degree_bound}"
            )));
        }
        terms.push((TermKey { depth: 0, exponents }, c as u32));
    }
    let result = NCPoly::new(domain, degree_bound, theta, terms)?;
    for x in domain.points() {
        let expect = TorusValue::new(field.abs_trace(poly.eval(field, &domain.coords(x))) as u64, 1, p as u32);
        if result.eval(x) != expect {
            return Err(Error::DegreeConstraint("trace-form reconstruction failed".into()));
        }
    }
    Ok(result)
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    exponents: Vec<Vec<u32>>,
    depth: u32,
    coeff: u32,
}

#[derive(Serialize, Deserialize)]
struct NCPolyRepr {
    field: FieldSpec,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree_bound: Option<u32>,
    theta: [u64; 2],
    terms: Vec<TermRepr>,
}

impl Serialize for NCPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let t = self.domain.field().t();
        NCPolyRepr {
            field: self.domain.field().spec(),
            n: self.domain.n(),
            degree_bound: Some(self.degree_bound),
            theta: [self.theta.numerator, self.theta.log_denominator as u64],
            terms: self
                .terms
                .iter()
                .map(|(k, &c)| TermRepr {
                    exponents: k.exponents.chunks(t).map(|c| c.to_vec()).collect(),
                    depth: k.depth,
                    coeff: c,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NCPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = NCPolyRepr::deserialize(d)?;
        let field = Field::from_spec(&repr.field).map_err(D::Error::custom)?;
        let p = field.p();
        let domain = Domain::new(std::sync::Arc::new(field), repr.n).map_err(D::Error::custom)?;
        let terms: Vec<(TermKey, u32)> = repr
            .terms
            .into_iter()
            .map(|t| {
                (
                    TermKey {
                        depth: t.depth,
                        exponents: t.exponents.concat(),
                    },
                    t.coeff,
                )
            })
            .collect();
        let degree_bound = repr
            .degree_bound
            .unwrap_or_else(|| terms.iter().map(|(k, _)| k.degree(p)).max().unwrap_or(0));
        let theta = TorusValue::new(repr.theta[0], repr.theta[1] as u32, p);
        NCPoly::new(&domain, degree_bound, theta, terms).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::field::FieldElem;
    use crate::gowers::gowers_norm_exact;
    use crate::util::DEFAULT_BUDGET;

    fn domain(p: u32, t: usize, n: usize) -> Domain {
        Domain::new(Arc::new(Field::canonical(p, t).unwrap()), n).unwrap()
    }

    fn quarter_x() -> NCPoly {
        // |x| / 4 over F_2
        let d = domain(2, 1, 1);
        NCPoly::new(&d, 2, TorusValue::zero(2), [(TermKey { depth: 1, exponents: vec![1] }, 1)]).unwrap()
    }

    fn classical_x1x2() -> NCPoly {
        let d = domain(2, 1, 2);
        NCPoly::new(&d, 2, TorusValue::zero(2), [(TermKey { depth: 0, exponents: vec![1, 1] }, 1)]).unwrap()
    }

    #[test]
    fn torus_arithmetic() {
        let a = TorusValue::new(3, 2, 2);
        let b = TorusValue::new(1, 1, 2);
        assert_eq!(a.add(b), TorusValue::new(1, 2, 2));
        assert_eq!(a.add(a.neg()), TorusValue::zero(2));
        assert_eq!(TorusValue::new(2, 2, 2), TorusValue::new(1, 1, 2));
        assert_eq!(TorusValue::new(4, 2, 2), TorusValue::zero(2));
        assert_eq!(b.sub(a), TorusValue::new(3, 2, 2));
        assert_eq!(TorusValue::new(1, 2, 2).to_f64(), 0.25);
    }

    #[test]
    fn eval_examples() {
        let d = domain(3, 1, 2);
        let empty = NCPoly::new(&d, 3, TorusValue::zero(3), []).unwrap();
        assert!(d.points().all(|x| empty.eval(x).is_zero()));

        let q = quarter_x();
        assert_eq!(q.eval(1), TorusValue::new(1, 2, 2));
        assert_eq!(q.eval(0), TorusValue::zero(2));

        let c = classical_x1x2();
        assert_eq!(c.eval(3), TorusValue::new(1, 1, 2));
        assert_eq!(c.eval(2), TorusValue::zero(2));
    }

    #[test]
    fn construction_enforces_index_constraints() {
        let d = domain(2, 1, 1);
        let key = |depth, e: u32| TermKey { depth, exponents: vec![e] };
        // depth 1 needs degree bound ≥ 1 + 1
        assert!(NCPoly::new(&d, 1, TorusValue::zero(2), [(key(1, 1), 1)]).is_err());
        assert!(NCPoly::new(&d, 3, TorusValue::zero(2), [(key(0, 2), 1)]).is_err());
        assert!(NCPoly::new(&d, 3, TorusValue::zero(2), [(key(0, 0), 1)]).is_err());
        assert!(NCPoly::new(&d, 3, TorusValue::zero(2), [(key(0, 1), 2)]).is_err());
        let p = NCPoly::new(&d, 3, TorusValue::zero(2), [(key(0, 1), 0)]).unwrap();
        assert!(p.terms().is_empty());
    }

    #[test]
    fn additive_diff_examples() {
        let d = domain(2, 1, 1);
        let q = quarter_x().eval_table();
        let diff = additive_diff(&q, 1).unwrap();
        assert_eq!(diff.get(0), TorusValue::new(1, 2, 2));
        assert_eq!(diff.get(1), TorusValue::new(3, 2, 2));
        assert!(additive_diff(&q, 0).unwrap().is_zero());
        let constant = TorusTable::new(d.clone(), 3, vec![5, 5]).unwrap();
        assert!(additive_diff(&constant, 1).unwrap().is_zero());
        assert!(additive_diff(&q, 2).is_err());
    }

    #[test]
    fn degree_examples() {
        let q = quarter_x();
        assert!(!degree_certify(&q, 2, DEFAULT_BUDGET).unwrap());
        assert!(degree_certify(&q, 3, DEFAULT_BUDGET).unwrap());
        let dd = additive_diff(&additive_diff(&q.eval_table(), 1).unwrap(), 1).unwrap();
        assert!(d_all(&dd, TorusValue::new(1, 1, 2)));

        let d = domain(5, 1, 2);
        let theta = NCPoly::new(&d, 0, TorusValue::new(2, 1, 5), []).unwrap();
        assert!(degree_certify(&theta, 1, DEFAULT_BUDGET).unwrap());
        assert!(!degree_certify(&theta, 0, DEFAULT_BUDGET).unwrap());

        let c = classical_x1x2();
        assert!(!degree_certify(&c, 2, DEFAULT_BUDGET).unwrap());
        assert!(degree_certify(&c, 3, DEFAULT_BUDGET).unwrap());
    }

    fn d_all(t: &TorusTable, v: TorusValue) -> bool {
        t.domain().points().all(|x| t.get(x) == v)
    }

    #[test]
    fn degree_certification_budget_and_sampling() {
        let c = classical_x1x2();
        assert!(matches!(degree_certify(&c, 3, 10), Err(Error::BudgetExceeded { .. })));
        let cert = certify_degree(&c, 3, 10, 1);
        assert_eq!(cert.mode, CertificationMode::Probabilistic);
        assert!(cert.holds);
        let cert = certify_degree(&c, 2, 10, 1);
        assert!(!cert.holds);
        assert_eq!(certify_degree(&c, 3, DEFAULT_BUDGET, 1).mode, CertificationMode::Exhaustive);
    }

    #[test]
    fn phase_examples() {
        let d = domain(2, 1, 1);
        let z = phase(&NCPoly::zero(&d));
        assert!(z.values().iter().all(|v| (v - num_complex::Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let ph = phase(&quarter_x());
        assert!((ph.at(0) - num_complex::Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((ph.at(1) - num_complex::Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn enumeration_examples() {
        let d = domain(2, 1, 1);
        let polys = enumerate_ncpolys(&d, 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(polys.len(), 2);
        assert!(polys[0].eval_table().is_zero());
        assert_eq!(polys[1].eval(1), TorusValue::new(1, 1, 2));
        assert_eq!(polys[1].eval(0), TorusValue::zero(2));
    }

    #[test]
    fn enumeration_counts_respect_bound_and_certify() {
        for (p, t, n, r) in [(2, 1, 1, 2), (2, 1, 1, 3), (2, 1, 2, 3), (3, 1, 1, 3), (2, 2, 1, 2), (3, 1, 2, 2), (2, 1, 2, 4)] {
            let d = domain(p, t, n);
            let polys = enumerate_ncpolys(&d, r, DEFAULT_BUDGET).unwrap();
            let bound = pow_sat(p as u128, coefficient_count_bound(p, t, n, r) as u64);
            assert!((polys.len() as u128) <= bound);
            for poly in &polys {
                assert!(poly.eval(0).is_zero());
                assert!(degree_certify(poly, r, DEFAULT_BUDGET).unwrap());
                // values lie in (1/p^r)Z/Z
                assert!(poly.log_den() <= r);
                if r <= 3 {
                    let u = gowers_norm_exact(&phase(poly), r as usize, DEFAULT_BUDGET).unwrap();
                    assert!((u - 1.0).abs() < 1e-9);
                }
            }
            let tables: HashSet<Vec<u64>> =
                polys.iter().map(|p| p.eval_table().rescaled(r).numerators().to_vec()).collect();
            assert_eq!(tables.len(), polys.len());
        }
    }

    #[test]
    fn enumeration_budget() {
        let d = domain(2, 1, 3);
        assert!(matches!(enumerate_ncpolys(&d, 4, 1000), Err(Error::BudgetExceeded { .. })));
        assert!(enumerate_ncpolys(&d, 0, DEFAULT_BUDGET).is_err());
    }

    #[test]
    fn from_classical_examples() {
        let d1 = domain(2, 1, 1);
        let zero = from_classical(&d1, &ClassicalPoly::default(), 1).unwrap();
        assert!(zero.eval_table().is_zero());
        assert!(zero.terms().is_empty());

        let x1 = ClassicalPoly::new([(vec![1], FieldElem::ONE)]);
        let p = from_classical(&d1, &x1, 1).unwrap();
        assert_eq!(p.eval(1), TorusValue::new(1, 1, 2));
        assert_eq!(p.eval(0), TorusValue::zero(2));

        let d2 = domain(2, 1, 2);
        let x1x2 = ClassicalPoly::new([(vec![1, 1], FieldElem::ONE)]);
        let p = from_classical(&d2, &x1x2, 2).unwrap();
        let vals: Vec<TorusValue> = d2.points().map(|x| p.eval(x)).collect();
        let (z, h) = (TorusValue::zero(2), TorusValue::new(1, 1, 2));
        assert_eq!(vals, vec![z, z, z, h]);
        assert!(from_classical(&d2, &x1x2, 1).is_err());
    }

    #[test]
    fn from_classical_over_extension_fields() {
        // x^3 over F_4 and x1^2 x2 + ω x2 over F_4^2, F_9 monomials
        let f4 = domain(2, 2, 1);
        let cube = ClassicalPoly::new([(vec![3], FieldElem::ONE)]);
        let p = from_classical(&f4, &cube, 4).unwrap();
        assert!(degree_certify(&p, 5, DEFAULT_BUDGET).unwrap());

        let f4sq = domain(2, 2, 2);
        let poly = ClassicalPoly::new([(vec![2, 1], FieldElem::ONE), (vec![0, 1], FieldElem(2))]);
        assert!(from_classical(&f4sq, &poly, 4).is_ok());

        let f9 = domain(3, 2, 1);
        let poly = ClassicalPoly::new([(vec![2], FieldElem(3)), (vec![0], FieldElem(1))]);
        let p = from_classical(&f9, &poly, 4).unwrap();
        assert_eq!(p.theta(), TorusValue::new(2, 1, 3));
    }

    #[test]
    fn certification_is_monotone_in_degree() {
        let d = domain(2, 1, 2);
        for poly in enumerate_ncpolys(&d, 4, DEFAULT_BUDGET).unwrap() {
            let certs: Vec<bool> = (0..6).map(|k| degree_certify(&poly, k, DEFAULT_BUDGET).unwrap()).collect();
            for w in certs.windows(2) {
                assert!(!w[0] || w[1]);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let p = classical_x1x2();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains(r#""terms":[{"exponents":[[1],[1]],"depth":0,"coeff":1}]"#));
        let back: NCPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
