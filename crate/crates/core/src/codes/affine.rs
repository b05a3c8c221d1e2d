//! Affine maps `x ↦ Ax + b` on `K^n`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain_fn::{DenseFn, Domain, Word};
use crate::error::{Error, Result};
use crate::field::{advance_digits, Field, FieldElem};
use crate::util::{check_budget, pow_sat};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffineMap {
    /// Row-major `n × n`.
    matrix: Vec<Vec<FieldElem>>,
    offset: Vec<FieldElem>,
    invertible: bool,
}

impl AffineMap {
    /// Checks invertibility by rank.
    pub fn new(field: &Field, matrix: Vec<Vec<FieldElem>>, offset: Vec<FieldElem>) -> Result<Self> {
        let n = offset.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("affine map needs an n×n matrix and length-n offset".into()));
        }
        let invertible = n == 0 || field.rank(&matrix) == n;
        Ok(AffineMap {
            matrix,
            offset,
            invertible,
        })
    }

    pub fn identity(n: usize) -> Self {
        AffineMap {
            matrix: (0..n)
                .map(|i| (0..n).map(|j| if i == j { FieldElem::ONE } else { FieldElem::ZERO }).collect())
                .collect(),
            offset: vec![FieldElem::ZERO; n],
            invertible: true,
        }
    }

    pub fn translation(offset: Vec<FieldElem>) -> Self {
        let mut m = AffineMap::identity(offset.len());
        m.offset = offset;
        m
    }

    pub fn n(&self) -> usize {
        self.offset.len()
    }

    pub fn matrix(&self) -> &[Vec<FieldElem>] {
        &self.matrix
    }

    pub fn offset(&self) -> &[FieldElem] {
        &self.offset
    }

    pub fn is_invertible(&self) -> bool {
        self.invertible
    }

    pub fn is_linear(&self) -> bool {
        self.offset.iter().all(|c| c.is_zero())
    }

    pub fn apply_coords(&self, field: &Field, x: &[FieldElem]) -> Vec<FieldElem> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, &b)| field.add(field.dot(row, x), b))
            .collect()
    }

    pub fn apply_point(&self, domain: &Domain, x: usize) -> usize {
        domain.index(&self.apply_coords(domain.field(), &domain.coords(x)))
    }

    /// `σ(x) = Ax + b` for every point index.
    pub fn point_map(&self, domain: &Domain) -> Vec<usize> {
        domain.points().map(|x| self.apply_point(domain, x)).collect()
    }

    pub fn inverse(&self, field: &Field) -> Option<AffineMap> {
        let inv = field.invert_matrix(&self.matrix)?;
        let shifted: Vec<FieldElem> = inv.iter().map(|row| field.neg(field.dot(row, &self.offset))).collect();
        Some(AffineMap {
            matrix: inv,
            offset: shifted,
            invertible: true,
        })
    }

    /// `self ∘ other`, i.e. `x ↦ self(other(x))`.
    pub fn compose(&self, field: &Field, other: &AffineMap) -> AffineMap {
        let n = self.n();
        let matrix = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..n).fold(FieldElem::ZERO, |acc, k| {
                            field.add(acc, field.mul(self.matrix[i][k], other.matrix[k][j]))
                        })
                    })
                    .collect()
            })
            .collect();
        AffineMap {
            matrix,
            offset: self.apply_coords(field, &other.offset),
            invertible: self.invertible && other.invertible,
        }
    }
}

/// Uniform over invertible affine maps: matrices are redrawn until full rank.
pub fn random_invertible_affine<R: Rng + ?Sized>(field: &Field, n: usize, rng: &mut R) -> AffineMap {
    let q = field.q();
    let mut draw = || FieldElem(rng.gen_range(0..q));
    loop {
        let matrix: Vec<Vec<FieldElem>> = (0..n).map(|_| (0..n).map(|_| draw()).collect()).collect();
        if n == 0 || field.rank(&matrix) == n {
            let offset = (0..n).map(|_| draw()).collect();
            return AffineMap {
                matrix,
                offset,
                invertible: true,
            };
        }
    }
}

/// Uniform over invertible linear maps.
pub fn random_invertible_linear<R: Rng + ?Sized>(field: &Field, n: usize, rng: &mut R) -> AffineMap {
    let mut m = random_invertible_affine(field, n, rng);
    m.offset = vec![FieldElem::ZERO; n];
    m
}

/// `|GL_n(F_q)| = Π_{i<n} (q^n − q^i)`.
pub fn gl_order(q: u32, n: usize) -> u128 {
    let qn = pow_sat(q as u128, n as u64);
    (0..n as u64).fold(1u128, |acc, i| acc.saturating_mul(qn - pow_sat(q as u128, i)))
}

/// Every invertible linear map, matrices in odometer order of their entries.
pub fn all_invertible_linear(field: &Field, n: usize, budget: u128) -> Result<Vec<AffineMap>> {
    check_budget(pow_sat(field.q() as u128, (n * n) as u64), budget)?;
    let mut entries = vec![0u32; n * n];
    let mut out = Vec::new();
    loop {
        let matrix: Vec<Vec<FieldElem>> = entries.chunks(n.max(1)).map(|r| r.iter().map(|&e| FieldElem(e)).collect()).collect();
        let matrix = if n == 0 { Vec::new() } else { matrix };
        if n == 0 || field.rank(&matrix) == n {
            out.push(AffineMap {
                matrix,
                offset: vec![FieldElem::ZERO; n],
                invertible: true,
            });
        }
        if !advance_digits(&mut entries, field.q()) {
            break;
        }
    }
    Ok(out)
}

/// Every invertible affine map: each linear part with every offset.
pub fn all_invertible_affine(domain: &Domain, budget: u128) -> Result<Vec<AffineMap>> {
    let field = domain.field();
    let n = domain.n();
    check_budget(
        gl_order(field.q(), n).saturating_mul(domain.size() as u128),
        budget,
    )?;
    let linear = all_invertible_linear(field, n, budget)?;
    let mut out = Vec::with_capacity(linear.len() * domain.size());
    for a in &linear {
        for b in domain.points() {
            let mut m = a.clone();
            m.offset = domain.coords(b);
            out.push(m);
        }
    }
    Ok(out)
}

/// Types that can be precomposed with an affine map.
pub trait Precompose: Sized {
    fn precompose(&self, map: &AffineMap) -> Result<Self>;
}

impl Precompose for Word {
    fn precompose(&self, map: &AffineMap) -> Result<Word> {
        let d = self.domain();
        if map.n() != d.n() {
            return Err(Error::DimensionMismatch("map and word dimensions differ".into()));
        }
        let symbols = map.point_map(d).into_iter().map(|y| self.at(y)).collect();
        Word::new(d.clone(), self.m(), symbols)
    }
}

impl Precompose for DenseFn {
    fn precompose(&self, map: &AffineMap) -> Result<DenseFn> {
        let d = self.domain();
        if map.n() != d.n() {
            return Err(Error::DimensionMismatch("map and function dimensions differ".into()));
        }
        let sigma = map.point_map(d);
        Ok(DenseFn::from_fn(d, |x| self.at(sigma[x])))
    }
}

/// `(w ∘ ℓ)(x) = w(Ax + b)`.
pub fn apply_affine<T: Precompose>(w: &T, map: &AffineMap) -> Result<T> {
    w.precompose(map)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::sync::Arc;

    use super::*;
    use crate::util::{rng_from_seed, DEFAULT_BUDGET};

    fn dom(p: u32, t: usize, n: usize) -> Domain {
        Domain::new(Arc::new(Field::canonical(p, t).unwrap()), n).unwrap()
    }

    #[test]
    fn gl_counts() {
        let f2 = Field::prime(2).unwrap();
        assert_eq!(all_invertible_linear(&f2, 2, DEFAULT_BUDGET).unwrap().len(), 6);
        assert_eq!(gl_order(2, 2), 6);
        assert_eq!(gl_order(2, 3), 168);
        assert_eq!(all_invertible_linear(&f2, 3, DEFAULT_BUDGET).unwrap().len(), 168);
        let f3 = Field::prime(3).unwrap();
        assert_eq!(all_invertible_linear(&f3, 2, DEFAULT_BUDGET).unwrap().len(), gl_order(3, 2) as usize);
        assert_eq!(all_invertible_affine(&dom(2, 1, 2), DEFAULT_BUDGET).unwrap().len(), 24);
    }

    #[test]
    fn one_dimensional_binary_maps_are_uniform() {
        let f2 = Field::prime(2).unwrap();
        let mut rng = rng_from_seed(21);
        let mut counts: HashMap<AffineMap, usize> = HashMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            *counts.entry(random_invertible_affine(&f2, 1, &mut rng)).or_default() += 1;
        }
        assert_eq!(counts.len(), 2);
        let expected = draws as f64 / 2.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 1 degree of freedom, 0.1% critical value
        assert!(chi2 < 10.83, "chi2 = {chi2}");
    }

    #[test]
    fn composition_and_inverse() {
        let d = dom(2, 2, 2);
        let f = d.field();
        let mut rng = rng_from_seed(4);
        let w = Word::new(d.clone(), 4, d.points().map(|x| (x % 4) as u32 + 1).collect()).unwrap();
        for _ in 0..20 {
            let a = random_invertible_affine(f, 2, &mut rng);
            let b = random_invertible_affine(f, 2, &mut rng);
            let ab = a.compose(f, &b);
            assert!(ab.is_invertible());
            assert_eq!(f.rank(ab.matrix()), 2);
            for x in d.points() {
                assert_eq!(ab.apply_point(&d, x), a.apply_point(&d, b.apply_point(&d, x)));
            }
            let inv = a.inverse(f).unwrap();
            let back = apply_affine(&apply_affine(&w, &a).unwrap(), &inv).unwrap();
            assert_eq!(back, w);
        }
    }

    #[test]
    fn apply_examples() {
        let d = dom(2, 1, 2);
        let w = Word::new(d.clone(), 2, vec![2, 1, 1, 1]).unwrap();
        assert_eq!(apply_affine(&w, &AffineMap::identity(2)).unwrap(), w);
        let c = Word::constant(&d, 2, 2).unwrap();
        let mut rng = rng_from_seed(1);
        let m = random_invertible_affine(d.field(), 2, &mut rng);
        assert_eq!(apply_affine(&c, &m).unwrap(), c);
        // (w∘ℓ)(x) = w(x + (1,0)): the marked origin moves to (1,0), index 1
        let shift = AffineMap::translation(vec![FieldElem::ONE, FieldElem::ZERO]);
        assert_eq!(apply_affine(&w, &shift).unwrap().symbols(), &[1, 2, 1, 1]);
    }

    #[test]
    fn singular_matrices_are_flagged() {
        let f2 = Field::prime(2).unwrap();
        let m = AffineMap::new(&f2, vec![vec![FieldElem::ONE; 2]; 2], vec![FieldElem::ZERO; 2]).unwrap();
        assert!(!m.is_invertible());
        assert!(m.inverse(&f2).is_none());
    }
}
