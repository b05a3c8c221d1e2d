//! Finite fields `F_{p^t}` with table-driven arithmetic, trace and linear algebra.
//!
//! Elements are stored as their canonical index: the power-basis coordinates
//! `(c_0, …, c_{t-1})` read as a little-endian base-`p` number, so the
//! enumeration order is lexicographic on coordinates with `c_0` varying
//! fastest and zero first.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest field size for which addition and multiplication tables are built.
pub const MAX_FIELD_SIZE: u32 = 1024;

/// An element of a [`Field`], identified by its canonical index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElem(pub u32);

impl FieldElem {
    pub const ZERO: FieldElem = FieldElem(0);
    pub const ONE: FieldElem = FieldElem(1);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Serialized description of a field: `{p, t, modulus_poly: [c_0, …, c_t]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub p: u32,
    pub t: usize,
    pub modulus_poly: Vec<u32>,
}

/// The finite field `F_p[x] / (modulus_poly)` with a fixed `F_p`-basis.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FieldSpec", into = "FieldSpec")]
pub struct Field {
    p: u32,
    t: usize,
    q: u32,
    modulus: Vec<u32>,
    basis: Vec<FieldElem>,
    add: Vec<u32>,
    mul: Vec<u32>,
    neg: Vec<u32>,
    inv: Vec<u32>,
    // |Tr(x)| for every x
    trace: Vec<u32>,
    // |Tr(alpha_j x)| for every x, row-major with stride t
    trace_digits: Vec<u32>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}^{} mod {:?}", self.p, self.t, self.modulus)
    }
}

fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Remainder of `a` modulo the monic polynomial `b` over `F_p`.
fn poly_rem(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    let mut r: Vec<u32> = a.to_vec();
    let db = b.len() - 1;
    while r.len() > db {
        let lead = *r.last().unwrap();
        let shift = r.len() - 1 - db;
        if lead != 0 {
            for (i, &bc) in b.iter().enumerate() {
                let sub = (lead as u64 * bc as u64 % p as u64) as u32;
                r[shift + i] = (r[shift + i] + p - sub) % p;
            }
        }
        r.pop();
    }
    r
}

/// Brute-force irreducibility: no monic factor of degree `1..=deg/2` divides.
fn is_irreducible(modulus: &[u32], p: u32) -> bool {
    let deg = modulus.len() - 1;
    if deg <= 1 {
        return true;
    }
    for fdeg in 1..=deg / 2 {
        let count = (p as u64).pow(fdeg as u32);
        for idx in 0..count {
            let mut factor = Vec::with_capacity(fdeg + 1);
            let mut rest = idx;
            for _ in 0..fdeg {
                factor.push((rest % p as u64) as u32);
                rest /= p as u64;
            }
            factor.push(1);
            if poly_rem(modulus, &factor, p).iter().all(|&c| c == 0) {
                return false;
            }
        }
    }
    true
}

impl Field {
    /// Builds `F_p[x]/(modulus_poly)`; `modulus_poly` lists `c_0..c_t` and must be monic.
    pub fn new(p: u32, modulus_poly: Vec<u32>) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidField(format!("{p} is not prime")));
        }
        if modulus_poly.len() < 2 {
            return Err(Error::InvalidField("modulus must have degree at least 1".into()));
        }
        if modulus_poly.iter().any(|&c| c >= p) {
            return Err(Error::InvalidField("modulus coefficient out of range".into()));
        }
        if *modulus_poly.last().unwrap() != 1 {
            return Err(Error::InvalidField("modulus must be monic".into()));
        }
        let t = modulus_poly.len() - 1;
        let q64 = (p as u64).checked_pow(t as u32).unwrap_or(u64::MAX);
        if q64 > MAX_FIELD_SIZE as u64 {
            return Err(Error::InvalidField(format!(
                "field size {p}^{t} exceeds {MAX_FIELD_SIZE}"
            )));
        }
        if !is_irreducible(&modulus_poly, p) {
            return Err(Error::InvalidField(format!(
                "{modulus_poly:?} is reducible over F_{p}"
            )));
        }
        let q = q64 as u32;
        let basis = (0..t).map(|j| FieldElem(p.pow(j as u32))).collect();
        let mut field = Field {
            p,
            t,
            q,
            modulus: modulus_poly,
            basis,
            add: Vec::new(),
            mul: Vec::new(),
            neg: Vec::new(),
            inv: Vec::new(),
            trace: Vec::new(),
            trace_digits: Vec::new(),
        };
        field.build_tables()?;
        Ok(field)
    }

    /// The prime field `F_p`.
    pub fn prime(p: u32) -> Result<Self> {
        Field::new(p, vec![0, 1])
    }

    /// Fields with a shipped modulus: every prime field, `F_4 = F_2[ω]/(ω²+ω+1)`,
    /// `F_8 = F_2[x]/(x³+x+1)` and `F_9 = F_3[i]/(i²+1)`.
    pub fn canonical(p: u32, t: usize) -> Result<Self> {
        match (p, t) {
            (_, 1) => Field::prime(p),
            (2, 2) => Field::new(2, vec![1, 1, 1]),
            (2, 3) => Field::new(2, vec![1, 1, 0, 1]),
            (3, 2) => Field::new(3, vec![1, 0, 1]),
            _ => Err(Error::InvalidField(format!(
                "no shipped modulus for F_{p}^{t}; supply modulus_poly"
            ))),
        }
    }

    pub fn from_spec(spec: &FieldSpec) -> Result<Self> {
        if spec.modulus_poly.len() != spec.t + 1 {
            return Err(Error::InvalidField(format!(
                "modulus_poly has {} coefficients, expected t + 1 = {}",
                spec.modulus_poly.len(),
                spec.t + 1
            )));
        }
        Field::new(spec.p, spec.modulus_poly.clone())
    }

    pub fn spec(&self) -> FieldSpec {
        FieldSpec {
            p: self.p,
            t: self.t,
            modulus_poly: self.modulus.clone(),
        }
    }

    /// Replaces the power basis by another `F_p`-basis `alpha_1..alpha_t`.
    pub fn with_basis(mut self, basis: Vec<FieldElem>) -> Result<Self> {
        if basis.len() != self.t {
            return Err(Error::InvalidField(format!("basis needs {} elements", self.t)));
        }
        // independence over F_p: the span must reach all q elements
        let mut span = vec![false; self.q as usize];
        let mut coeff = vec![0u32; self.t];
        loop {
            let mut acc = FieldElem::ZERO;
            for (c, &b) in coeff.iter().zip(&basis) {
                acc = self.add(acc, self.mul(FieldElem(*c), b));
            }
            span[acc.index()] = true;
            if !advance_digits(&mut coeff, self.p) {
                break;
            }
        }
        if span.iter().any(|s| !s) {
            return Err(Error::InvalidField("basis is not F_p-independent".into()));
        }
        self.basis = basis;
        self.build_trace_digits();
        Ok(self)
    }

    fn build_tables(&mut self) -> Result<()> {
        let q = self.q as usize;
        let coords: Vec<Vec<u32>> = (0..q as u32).map(|i| self.coeffs(FieldElem(i))).collect();
        self.add = vec![0; q * q];
        self.mul = vec![0; q * q];
        for a in 0..q {
            for b in 0..q {
                let sum: Vec<u32> = coords[a]
                    .iter()
                    .zip(&coords[b])
                    .map(|(x, y)| (x + y) % self.p)
                    .collect();
                self.add[a * q + b] = self.from_coeffs(&sum).0;
                let mut prod = vec![0u32; 2 * self.t - 1];
                for (i, &x) in coords[a].iter().enumerate() {
                    for (j, &y) in coords[b].iter().enumerate() {
                        prod[i + j] = ((prod[i + j] as u64 + x as u64 * y as u64) % self.p as u64) as u32;
                    }
                }
                let rem = poly_rem(&prod, &self.modulus, self.p);
                self.mul[a * q + b] = self.from_coeffs(&rem).0;
            }
        }
        self.neg = (0..q)
            .map(|a| (0..q).find(|&b| self.add[a * q + b] == 0).unwrap() as u32)
            .collect();
        self.inv = (0..q)
            .map(|a| {
                if a == 0 {
                    0
                } else {
                    (0..q).find(|&b| self.mul[a * q + b] == 1).unwrap() as u32
                }
            })
            .collect();
        let mut trace = Vec::with_capacity(q);
        for x in 0..q as u32 {
            let mut acc = FieldElem::ZERO;
            let mut pw = FieldElem(x);
            for _ in 0..self.t {
                acc = self.add(acc, pw);
                pw = self.frobenius(pw);
            }
            if acc.0 >= self.p {
                return Err(Error::InvalidField(format!(
                    "trace of element {x} left the prime subfield"
                )));
            }
            trace.push(acc.0);
        }
        self.trace = trace;
        self.build_trace_digits();
        Ok(())
    }

    fn build_trace_digits(&mut self) {
        let mut digits = Vec::with_capacity(self.q as usize * self.t);
        for x in 0..self.q {
            for &alpha in &self.basis {
                digits.push(self.trace[self.mul(alpha, FieldElem(x)).index()]);
            }
        }
        self.trace_digits = digits;
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    /// Extension degree over `F_p`.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Field size `p^t`.
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn size(&self) -> usize {
        self.q as usize
    }

    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }

    pub fn basis(&self) -> &[FieldElem] {
        &self.basis
    }

    /// Power-basis coordinates of `x`.
    pub fn coeffs(&self, x: FieldElem) -> Vec<u32> {
        let mut rest = x.0;
        (0..self.t)
            .map(|_| {
                let c = rest % self.p;
                rest /= self.p;
                c
            })
            .collect()
    }

    pub fn from_coeffs(&self, coeffs: &[u32]) -> FieldElem {
        let mut idx = 0u32;
        for &c in coeffs.iter().rev() {
            idx = idx * self.p + (c % self.p);
        }
        FieldElem(idx)
    }

    /// Embeds an integer residue into the prime subfield.
    pub fn from_prime(&self, c: u32) -> FieldElem {
        FieldElem(c % self.p)
    }

    pub fn contains(&self, x: FieldElem) -> bool {
        x.0 < self.q
    }

    /// All `q` elements in canonical order.
    pub fn elements(&self) -> impl Iterator<Item = FieldElem> + '_ {
        (0..self.q).map(FieldElem)
    }

    #[inline]
    pub fn add(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        FieldElem(self.add[a.index() * self.q as usize + b.index()])
    }

    #[inline]
    pub fn sub(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn neg(&self, a: FieldElem) -> FieldElem {
        FieldElem(self.neg[a.index()])
    }

    #[inline]
    pub fn mul(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        FieldElem(self.mul[a.index() * self.q as usize + b.index()])
    }

    pub fn inv(&self, a: FieldElem) -> Option<FieldElem> {
        if a.is_zero() {
            None
        } else {
            Some(FieldElem(self.inv[a.index()]))
        }
    }

    pub fn pow(&self, a: FieldElem, mut e: u64) -> FieldElem {
        let mut base = a;
        let mut acc = FieldElem::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// `x ↦ x^p`.
    pub fn frobenius(&self, x: FieldElem) -> FieldElem {
        self.pow(x, self.p as u64)
    }

    /// `Tr(x) = x + x^p + … + x^{p^{t-1}}`, as an element of the prime subfield.
    pub fn trace(&self, x: FieldElem) -> FieldElem {
        FieldElem(self.trace[x.index()])
    }

    /// `|Tr(x)|` in `{0, …, p-1}`.
    #[inline]
    pub fn abs_trace(&self, x: FieldElem) -> u32 {
        self.trace[x.index()]
    }

    /// `|Tr(alpha_j x)|` for `j = 1..t`.
    #[inline]
    pub fn trace_digits(&self, x: FieldElem) -> &[u32] {
        let s = x.index() * self.t;
        &self.trace_digits[s..s + self.t]
    }

    /// Gaussian elimination over the field; see [`RankSolution`].
    pub fn rank_and_solve(&self, vectors: &[Vec<FieldElem>]) -> Result<RankSolution> {
        let dim = match vectors.first() {
            Some(v) => v.len(),
            None => return Err(Error::InvalidArgument("no vectors given".into())),
        };
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch("vectors of unequal length".into()));
        }
        // Each row is an echelon vector with pivot 1, plus its expression as a
        // combination of the chosen basis vectors.
        let mut rows: Vec<(usize, Vec<FieldElem>, Vec<FieldElem>)> = Vec::new();
        let mut basis_indices = Vec::new();
        let mut coefficients = Vec::with_capacity(vectors.len());
        for (idx, y) in vectors.iter().enumerate() {
            let mut residual = y.clone();
            let mut combo = vec![FieldElem::ZERO; basis_indices.len()];
            for (pivot, row, row_combo) in &rows {
                let a = residual[*pivot];
                if a.is_zero() {
                    continue;
                }
                for (r, &v) in residual.iter_mut().zip(row) {
                    *r = self.sub(*r, self.mul(a, v));
                }
                for (c, &v) in combo.iter_mut().zip(row_combo) {
                    *c = self.add(*c, self.mul(a, v));
                }
            }
            match residual.iter().position(|x| !x.is_zero()) {
                None => coefficients.push(combo),
                Some(pivot) => {
                    // y = v_new; residual = v_new - combo·v
                    let scale = self.inv(residual[pivot]).unwrap();
                    let row: Vec<FieldElem> = residual.iter().map(|&x| self.mul(scale, x)).collect();
                    let mut row_combo: Vec<FieldElem> =
                        combo.iter().map(|&c| self.mul(scale, self.neg(c))).collect();
                    row_combo.push(scale);
                    for (_, _, rc) in rows.iter_mut() {
                        rc.push(FieldElem::ZERO);
                    }
                    rows.push((pivot, row, row_combo));
                    basis_indices.push(idx);
                    let mut own = vec![FieldElem::ZERO; basis_indices.len()];
                    *own.last_mut().unwrap() = FieldElem::ONE;
                    coefficients.push(own);
                }
            }
        }
        let rank = basis_indices.len();
        for c in coefficients.iter_mut() {
            c.resize(rank, FieldElem::ZERO);
        }
        Ok(RankSolution {
            rank,
            basis_indices,
            coefficients,
        })
    }

    /// Rank of a list of equal-length vectors.
    pub fn rank(&self, vectors: &[Vec<FieldElem>]) -> usize {
        if vectors.is_empty() {
            return 0;
        }
        self.rank_and_solve(vectors).map(|s| s.rank).unwrap_or(0)
    }

    /// Inverse of a square matrix (row-major rows), or `None` if singular.
    pub fn invert_matrix(&self, m: &[Vec<FieldElem>]) -> Option<Vec<Vec<FieldElem>>> {
        let n = m.len();
        let mut a: Vec<Vec<FieldElem>> = m
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r.extend((0..n).map(|j| if i == j { FieldElem::ONE } else { FieldElem::ZERO }));
                r
            })
            .collect();
        for col in 0..n {
            let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
            a.swap(col, piv);
            let s = self.inv(a[col][col])?;
            for x in a[col].iter_mut() {
                *x = self.mul(s, *x);
            }
            for r in 0..n {
                if r != col && !a[r][col].is_zero() {
                    let f = a[r][col];
                    let pivot_row = a[col].clone();
                    for (x, &v) in a[r].iter_mut().zip(&pivot_row) {
                        *x = self.sub(*x, self.mul(f, v));
                    }
                }
            }
        }
        Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
    }

    pub fn dot(&self, a: &[FieldElem], b: &[FieldElem]) -> FieldElem {
        a.iter()
            .zip(b)
            .fold(FieldElem::ZERO, |acc, (&x, &y)| self.add(acc, self.mul(x, y)))
    }
}

impl TryFrom<FieldSpec> for Field {
    type Error = Error;

    fn try_from(spec: FieldSpec) -> Result<Self> {
        Field::from_spec(&spec)
    }
}

impl From<Field> for FieldSpec {
    fn from(f: Field) -> Self {
        f.spec()
    }
}

/// Result of [`Field::rank_and_solve`]: `vectors[i] = Σ_j coefficients[i][j] · vectors[basis_indices[j]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankSolution {
    pub rank: usize,
    pub basis_indices: Vec<usize>,
    pub coefficients: Vec<Vec<FieldElem>>,
}

/// Little-endian odometer over `{0..radix-1}^len`; returns false after the last tuple.
pub(crate) fn advance_digits(digits: &mut [u32], radix: u32) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_fields() -> Vec<Field> {
        vec![
            Field::prime(2).unwrap(),
            Field::prime(3).unwrap(),
            Field::canonical(2, 2).unwrap(),
            Field::prime(5).unwrap(),
            Field::prime(7).unwrap(),
            Field::canonical(2, 3).unwrap(),
            Field::canonical(3, 2).unwrap(),
        ]
    }

    /// Frobenius orbit sum computed by repeated multiplication, not by the table.
    fn orbit_trace(f: &Field, x: FieldElem) -> FieldElem {
        let mut acc = FieldElem::ZERO;
        let mut cur = x;
        for _ in 0..f.t() {
            acc = f.add(acc, cur);
            let mut pw = FieldElem::ONE;
            for _ in 0..f.p() {
                pw = f.mul(pw, cur);
            }
            cur = pw;
        }
        acc
    }

    #[test]
    fn trace_examples() {
        let f4 = Field::canonical(2, 2).unwrap();
        let omega = f4.from_coeffs(&[0, 1]);
        assert_eq!(orbit_trace(&f4, omega), FieldElem::ONE);
        assert_eq!(f4.trace(omega), FieldElem::ONE);
        for f in small_fields() {
            assert_eq!(f.trace(FieldElem::ZERO), FieldElem::ZERO);
        }
        let f9 = Field::canonical(3, 2).unwrap();
        let i = f9.from_coeffs(&[0, 1]);
        assert_eq!(orbit_trace(&f9, i), FieldElem::ZERO);
        assert_eq!(f9.trace(i), FieldElem::ZERO);
    }

    #[test]
    fn trace_matches_orbit_sum_everywhere() {
        for f in small_fields() {
            for x in f.elements() {
                assert_eq!(f.trace(x), orbit_trace(&f, x));
            }
        }
    }

    #[test]
    fn trace_is_fp_linear_and_lands_in_prime_field() {
        for f in small_fields() {
            for x in f.elements() {
                let tx = f.trace(x);
                assert_eq!(f.frobenius(tx), tx);
                for y in f.elements() {
                    for a in 0..f.p() {
                        for b in 0..f.p() {
                            let (a, b) = (f.from_prime(a), f.from_prime(b));
                            let lhs = f.trace(f.add(f.mul(a, x), f.mul(b, y)));
                            let rhs = f.add(f.mul(a, f.trace(x)), f.mul(b, f.trace(y)));
                            assert_eq!(lhs, rhs);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn field_axioms_hold_exhaustively() {
        for f in small_fields() {
            for a in f.elements() {
                assert_eq!(f.add(a, f.neg(a)), FieldElem::ZERO);
                if !a.is_zero() {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), FieldElem::ONE);
                }
                for b in f.elements() {
                    assert_eq!(f.add(a, b), f.add(b, a));
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in f.elements() {
                        assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn enumeration_order() {
        let f2 = Field::prime(2).unwrap();
        assert_eq!(f2.elements().map(|e| f2.coeffs(e)).collect::<Vec<_>>(), vec![vec![0], vec![1]]);
        let f4 = Field::canonical(2, 2).unwrap();
        let listed: Vec<Vec<u32>> = f4.elements().map(|e| f4.coeffs(e)).collect();
        assert_eq!(listed, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]);
        let f3 = Field::prime(3).unwrap();
        assert_eq!(f3.elements().map(|e| e.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn rejects_reducible_and_nonprime() {
        assert!(Field::new(4, vec![0, 1]).is_err());
        // x^2 + 1 = (x+1)^2 over F_2
        assert!(Field::new(2, vec![1, 0, 1]).is_err());
        // x^2 + 1 splits over F_5 (2^2 = -1)
        assert!(Field::new(5, vec![1, 0, 1]).is_err());
        assert!(Field::new(2, vec![1, 1, 0]).is_err());
        assert!(Field::canonical(5, 2).is_err());
    }

    #[test]
    fn rank_examples() {
        let f2 = Field::prime(2).unwrap();
        let e = |v: &[u32]| v.iter().map(|&x| FieldElem(x)).collect::<Vec<_>>();
        let sol = f2.rank_and_solve(&[e(&[1, 0]), e(&[0, 1]), e(&[1, 1])]).unwrap();
        assert_eq!(sol.rank, 2);
        assert_eq!(sol.basis_indices, vec![0, 1]);
        assert_eq!(sol.coefficients[2], e(&[1, 1]));

        let sol = f2.rank_and_solve(&[e(&[0, 0])]).unwrap();
        assert_eq!(sol.rank, 0);
        assert!(sol.basis_indices.is_empty());

        let f4 = Field::canonical(2, 2).unwrap();
        let w = f4.from_coeffs(&[0, 1]);
        let w2 = f4.mul(w, w);
        let sol = f4.rank_and_solve(&[vec![w, FieldElem::ONE], vec![w2, w]]).unwrap();
        assert_eq!(sol.rank, 1);
        assert_eq!(sol.coefficients[1], vec![w]);
    }

    #[test]
    fn rank_reconstruction_holds() {
        use rand::Rng;
        let mut rng = crate::util::rng_from_seed(11);
        for f in small_fields() {
            for _ in 0..50 {
                let count = rng.gen_range(1..6);
                let dim = rng.gen_range(1..5);
                let vs: Vec<Vec<FieldElem>> = (0..count)
                    .map(|_| (0..dim).map(|_| FieldElem(rng.gen_range(0..f.q()))).collect())
                    .collect();
                let sol = f.rank_and_solve(&vs).unwrap();
                assert!(sol.rank <= dim.min(count));
                for (y, lam) in vs.iter().zip(&sol.coefficients) {
                    let mut acc = vec![FieldElem::ZERO; dim];
                    for (&l, &bi) in lam.iter().zip(&sol.basis_indices) {
                        for (a, &v) in acc.iter_mut().zip(&vs[bi]) {
                            *a = f.add(*a, f.mul(l, v));
                        }
                    }
                    assert_eq!(&acc, y);
                }
            }
        }
    }

    #[test]
    fn matrix_inverse_round_trip() {
        let f4 = Field::canonical(2, 2).unwrap();
        let m = vec![vec![FieldElem(2), FieldElem(1)], vec![FieldElem(3), FieldElem(0)]];
        let inv = f4.invert_matrix(&m).unwrap();
        for (i, row) in m.iter().enumerate() {
            for j in 0..2 {
                let col: Vec<FieldElem> = inv.iter().map(|r| r[j]).collect();
                let expect = if i == j { FieldElem::ONE } else { FieldElem::ZERO };
                assert_eq!(f4.dot(row, &col), expect);
            }
        }
        let singular = vec![vec![FieldElem(1), FieldElem(2)], vec![FieldElem(1), FieldElem(2)]];
        assert!(f4.invert_matrix(&singular).is_none());
    }

    #[test]
    fn custom_basis_must_be_independent() {
        let f4 = Field::canonical(2, 2).unwrap();
        assert!(f4.clone().with_basis(vec![FieldElem(1), FieldElem(1)]).is_err());
        let g = f4.with_basis(vec![FieldElem(2), FieldElem(3)]).unwrap();
        assert_eq!(g.basis(), &[FieldElem(2), FieldElem(3)]);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let f8 = Field::canonical(2, 3).unwrap();
        let s = serde_json::to_string(&f8).unwrap();
        assert_eq!(s, r#"{"p":2,"t":3,"modulus_poly":[1,1,0,1]}"#);
        let back: Field = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f8);
        assert!(serde_json::from_str::<Field>(r#"{"p":2,"t":2,"modulus_poly":[1,0,1]}"#).is_err());
    }
}
