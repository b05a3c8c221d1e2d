//! Functions on `K^n`: complex tables, words over `{1..m}`, simplex extensions.
//!
//! Points of `K^n` are indexed mixed-radix little-endian over the field
//! enumeration: `index = Σ_i x_i · q^i`, so `x_1` varies fastest. Because field
//! elements are themselves little-endian base-`p` coordinates, a point index
//! is a base-`p` number with `n·t` digits, and addition in `K^n` is digitwise
//! addition mod `p`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, FieldElem, FieldSpec};
use crate::util::par_sum;

/// Slack allowed on `|f| ≤ 1` and on probability-vector sums.
pub const BOUND_TOL: f64 = 1e-12;

/// The coordinate space `K^n`.
#[derive(Clone, Debug)]
pub struct Domain {
    field: Arc<Field>,
    n: usize,
    size: usize,
    digits: usize,
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && (Arc::ptr_eq(&self.field, &other.field) || self.field == other.field)
    }
}

impl Eq for Domain {}

impl Domain {
    pub fn new(field: Arc<Field>, n: usize) -> Result<Self> {
        let size = (field.q() as usize)
            .checked_pow(n as u32)
            .filter(|&s| s <= 1 << 31)
            .ok_or_else(|| Error::InvalidArgument(format!("domain K^{n} is too large")))?;
        let digits = n * field.t();
        Ok(Domain {
            field,
            n,
            size,
            digits,
        })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn field_arc(&self) -> &Arc<Field> {
        &self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of points, `q^n`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn points(&self) -> std::ops::Range<usize> {
        0..self.size
    }

    pub fn coords(&self, mut x: usize) -> Vec<FieldElem> {
        let q = self.field.q() as usize;
        (0..self.n)
            .map(|_| {
                let c = x % q;
                x /= q;
                FieldElem(c as u32)
            })
            .collect()
    }

    pub fn index(&self, coords: &[FieldElem]) -> usize {
        let q = self.field.q() as usize;
        coords.iter().rev().fold(0, |acc, c| acc * q + c.index())
    }

    /// `a + b` in `K^n`.
    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        let p = self.field.p() as usize;
        if p == 2 {
            return a ^ b;
        }
        let (mut a, mut b) = (a, b);
        let mut out = 0;
        let mut place = 1;
        for _ in 0..self.digits {
            out += ((a % p + b % p) % p) * place;
            a /= p;
            b /= p;
            place *= p;
        }
        out
    }

    #[inline]
    pub fn neg(&self, a: usize) -> usize {
        let p = self.field.p() as usize;
        if p == 2 {
            return a;
        }
        let mut a = a;
        let mut out = 0;
        let mut place = 1;
        for _ in 0..self.digits {
            out += ((p - a % p) % p) * place;
            a /= p;
            place *= p;
        }
        out
    }

    #[inline]
    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.add(a, self.neg(b))
    }

    /// `c · a` for a scalar `c ∈ K`.
    pub fn scale(&self, c: FieldElem, a: usize) -> usize {
        let q = self.field.q() as usize;
        let mut a = a;
        let mut out = 0;
        let mut place = 1;
        for _ in 0..self.n {
            let x = FieldElem((a % q) as u32);
            out += self.field.mul(c, x).index() * place;
            a /= q;
            place *= q;
        }
        out
    }

    /// Table of `x ↦ c·x` over all points.
    pub fn scale_table(&self, c: FieldElem) -> Vec<usize> {
        self.points().map(|x| self.scale(c, x)).collect()
    }

    /// The `n·t` values `|Tr(alpha_j x_i)|`, row `i`, column `j`.
    pub fn trace_digits(&self, x: usize) -> Vec<u32> {
        self.coords(x)
            .into_iter()
            .flat_map(|c| self.field.trace_digits(c).to_vec())
            .collect()
    }

    fn check_same(&self, other: &Domain) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch(format!(
                "{:?}^{} vs {:?}^{}",
                self.field, self.n, other.field, other.n
            )));
        }
        Ok(())
    }
}

/// A complex-valued function on `K^n`, stored as its full table.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFn {
    domain: Domain,
    values: Vec<Complex64>,
}

impl DenseFn {
    pub fn new(domain: Domain, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != domain.size() {
            return Err(Error::DimensionMismatch(format!(
                "table has {} values, domain has {} points",
                values.len(),
                domain.size()
            )));
        }
        Ok(DenseFn { domain, values })
    }

    pub fn from_fn(domain: &Domain, f: impl FnMut(usize) -> Complex64) -> Self {
        let values = domain.points().map(f).collect();
        DenseFn {
            domain: domain.clone(),
            values,
        }
    }

    pub fn from_real(domain: &Domain, values: &[f64]) -> Result<Self> {
        DenseFn::new(domain.clone(), values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn constant(domain: &Domain, c: Complex64) -> Self {
        DenseFn::from_fn(domain, |_| c)
    }

    /// A function with values drawn uniformly from the closed unit disk.
    pub fn random_bounded<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Self {
        DenseFn::from_fn(domain, |_| {
            let radius = rng.gen::<f64>().sqrt();
            let angle = rng.gen::<f64>() * std::f64::consts::TAU;
            Complex64::from_polar(radius, angle)
        })
    }

    /// A function with values drawn uniformly from `[-1, 1]`.
    pub fn random_real_bounded<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Self {
        DenseFn::from_fn(domain, |_| Complex64::new(rng.gen_range(-1.0..=1.0), 0.0))
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn at(&self, x: usize) -> Complex64 {
        self.values[x]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> DenseFn {
        DenseFn {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &DenseFn, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<DenseFn> {
        self.domain.check_same(&other.domain)?;
        Ok(DenseFn {
            domain: self.domain.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &DenseFn) -> Result<DenseFn> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseFn) -> Result<DenseFn> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &DenseFn) -> Result<DenseFn> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: Complex64) -> DenseFn {
        self.map(|v| v * c)
    }

    pub fn conj(&self) -> DenseFn {
        self.map(|v| v.conj())
    }

    /// `x ↦ f(x + a)`.
    pub fn translate(&self, a: usize) -> DenseFn {
        DenseFn::from_fn(&self.domain, |x| self.values[self.domain.add(x, a)])
    }

    pub fn mean(&self) -> Complex64 {
        par_sum(self.values.len(), |i| self.values[i]) / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm() <= 1.0 + BOUND_TOL
    }

    pub fn max_abs_diff(&self, other: &DenseFn) -> Result<f64> {
        self.domain.check_same(&other.domain)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// `⟨f, g⟩ = E_x[conj(f(x)) g(x)]`.
pub fn inner_product(f: &DenseFn, g: &DenseFn) -> Result<Complex64> {
    f.domain.check_same(&g.domain)?;
    let len = f.values.len();
    Ok(par_sum(len, |i| f.values[i].conj() * g.values[i]) / len as f64)
}

/// Expectation-normalised `L_p` norm; `f64::INFINITY` gives the max modulus.
pub fn lp_norm(f: &DenseFn, p_exp: f64) -> Result<f64> {
    if p_exp.is_nan() || p_exp < 1.0 {
        return Err(Error::InvalidExponent(p_exp));
    }
    if p_exp.is_infinite() {
        return Ok(f.sup_norm());
    }
    let len = f.values.len();
    let mean = par_sum(len, |i| f.values[i].norm().powf(p_exp)) / len as f64;
    Ok(mean.powf(1.0 / p_exp))
}

/// A word `K^n → {1, …, m}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Word {
    domain: Domain,
    m: u32,
    symbols: Vec<u32>,
}

impl Word {
    pub fn new(domain: Domain, m: u32, symbols: Vec<u32>) -> Result<Self> {
        if m == 0 {
            return Err(Error::OutOfRange("alphabet must be nonempty".into()));
        }
        if symbols.len() != domain.size() {
            return Err(Error::DimensionMismatch(format!(
                "word has {} symbols, domain has {} points",
                symbols.len(),
                domain.size()
            )));
        }
        if let Some(bad) = symbols.iter().find(|&&s| s == 0 || s > m) {
            return Err(Error::OutOfRange(format!("symbol {bad} not in 1..={m}")));
        }
        Ok(Word { domain, m, symbols })
    }

    pub fn constant(domain: &Domain, m: u32, symbol: u32) -> Result<Self> {
        Word::new(domain.clone(), m, vec![symbol; domain.size()])
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    #[inline]
    pub fn at(&self, x: usize) -> u32 {
        self.symbols[x]
    }

    pub fn with_symbol(&self, x: usize, symbol: u32) -> Result<Word> {
        let mut symbols = self.symbols.clone();
        symbols[x] = symbol;
        Word::new(self.domain.clone(), self.m, symbols)
    }

    fn check_shape(&self, other: &Word) -> Result<()> {
        self.domain.check_same(&other.domain)?;
        if self.m != other.m {
            return Err(Error::DimensionMismatch(format!(
                "alphabet sizes {} and {}",
                self.m, other.m
            )));
        }
        Ok(())
    }
}

/// Normalised Hamming distance: the fraction of points where the words differ.
pub fn hamming(w1: &Word, w2: &Word) -> Result<f64> {
    w1.check_shape(w2)?;
    let diff = w1.symbols.iter().zip(&w2.symbols).filter(|(a, b)| a != b).count();
    Ok(diff as f64 / w1.symbols.len() as f64)
}

/// A function `K^n → ▲_m`, stored flat with stride `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexFn {
    domain: Domain,
    m: u32,
    values: Vec<f64>,
}

impl SimplexFn {
    pub fn new(domain: Domain, m: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.size() * m as usize {
            return Err(Error::DimensionMismatch("simplex table length".into()));
        }
        for chunk in values.chunks(m as usize) {
            let sum: f64 = chunk.iter().sum();
            if chunk.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > BOUND_TOL {
                return Err(Error::OutOfRange(format!("{chunk:?} is not a probability vector")));
            }
        }
        Ok(SimplexFn { domain, m, values })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// The probability vector at `x`.
    pub fn at(&self, x: usize) -> &[f64] {
        let m = self.m as usize;
        &self.values[x * m..(x + 1) * m]
    }

    /// Coordinate slice `x ↦ ŵ(x)_i` for `i` in `1..=m`.
    pub fn coordinate(&self, i: u32) -> Result<DenseFn> {
        if i == 0 || i > self.m {
            return Err(Error::OutOfRange(format!("coordinate {i} not in 1..={}", self.m)));
        }
        let m = self.m as usize;
        let k = i as usize - 1;
        Ok(DenseFn::from_fn(&self.domain, |x| Complex64::new(self.values[x * m + k], 0.0)))
    }

    pub fn coordinates(&self) -> Vec<DenseFn> {
        (1..=self.m).map(|i| self.coordinate(i).unwrap()).collect()
    }

    /// `E_x ⟨a(x), b(x)⟩`.
    pub fn mean_agreement(&self, other: &SimplexFn) -> Result<f64> {
        self.domain.check_same(&other.domain)?;
        if self.m != other.m {
            return Err(Error::DimensionMismatch("alphabet sizes differ".into()));
        }
        let m = self.m as usize;
        let total: f64 = (0..self.domain.size())
            .map(|x| {
                self.values[x * m..(x + 1) * m]
                    .iter()
                    .zip(&other.values[x * m..(x + 1) * m])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        Ok(total / self.domain.size() as f64)
    }
}

/// Sends each symbol `i` to the coordinate vector `e_i`.
pub fn simplex_extend(w: &Word) -> SimplexFn {
    let m = w.m as usize;
    let mut values = vec![0.0; w.symbols.len() * m];
    for (x, &s) in w.symbols.iter().enumerate() {
        values[x * m + s as usize - 1] = 1.0;
    }
    SimplexFn {
        domain: w.domain.clone(),
        m: w.m,
        values,
    }
}

#[derive(Serialize, Deserialize)]
struct DenseFnRepr {
    field: FieldSpec,
    n: usize,
    values: Vec<[f64; 2]>,
}

impl Serialize for DenseFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DenseFnRepr {
            field: self.domain.field.spec(),
            n: self.domain.n,
            values: self.values.iter().map(|v| [v.re, v.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = DenseFnRepr::deserialize(d)?;
        let field = Field::from_spec(&repr.field).map_err(D::Error::custom)?;
        let domain = Domain::new(Arc::new(field), repr.n).map_err(D::Error::custom)?;
        let values = repr.values.iter().map(|v| Complex64::new(v[0], v[1])).collect();
        DenseFn::new(domain, values).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct WordRepr {
    field: FieldSpec,
    n: usize,
    m: u32,
    values: Vec<u32>,
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WordRepr {
            field: self.domain.field.spec(),
            n: self.domain.n,
            m: self.m,
            values: self.symbols.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = WordRepr::deserialize(d)?;
        let field = Field::from_spec(&repr.field).map_err(D::Error::custom)?;
        let domain = Domain::new(Arc::new(field), repr.n).map_err(D::Error::custom)?;
        Word::new(domain, repr.m, repr.values).map_err(D::Error::custom)
    }
}
