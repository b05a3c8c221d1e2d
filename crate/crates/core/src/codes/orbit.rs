//! Approximating the image of a point tuple under a random invertible affine
//! map by `y_i ↦ z_0 + Σ_j λ_ij z_j` with independent uniform `z`'s.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use super::all_invertible_affine;
use crate::domain_fn::Domain;
use crate::error::{Error, Result};
use crate::field::{advance_digits, FieldElem};
use crate::util::{check_budget, derive_seed, pow_sat, rng_from_seed};

#[derive(Clone, Debug, Serialize)]
pub struct OrbitSample {
    pub rank: usize,
    /// Positions in the input tuple of the vectors chosen as `v_1..v_t`.
    pub basis_indices: Vec<usize>,
    /// `λ_ij` as field element indices: `y_i = Σ_j λ_ij v_j`.
    pub lambda: Vec<Vec<u32>>,
    pub samples: Vec<Vec<usize>>,
    /// Fraction of draws with `z_1..z_t` linearly independent.
    pub independent_fraction: f64,
}

struct Relations {
    rank: usize,
    basis_indices: Vec<usize>,
    lambda: Vec<Vec<FieldElem>>,
}

fn relations(domain: &Domain, tuple: &[usize]) -> Result<Relations> {
    if tuple.is_empty() {
        return Err(Error::InvalidArgument("empty tuple".into()));
    }
    if tuple.iter().any(|&y| y >= domain.size()) {
        return Err(Error::OutOfRange("tuple point outside K^n".into()));
    }
    let vectors: Vec<Vec<FieldElem>> = tuple.iter().map(|&y| domain.coords(y)).collect();
    let sol = domain.field().rank_and_solve(&vectors)?;
    Ok(Relations {
        rank: sol.rank,
        basis_indices: sol.basis_indices,
        lambda: sol.coefficients,
    })
}

fn image(domain: &Domain, lambda: &[Vec<FieldElem>], z: &[usize]) -> Vec<usize> {
    lambda
        .iter()
        .map(|row| {
            row.iter()
                .zip(&z[1..])
                .fold(z[0], |acc, (&c, &zj)| domain.add(acc, domain.scale(c, zj)))
        })
        .collect()
}

fn independent(domain: &Domain, zs: &[usize]) -> bool {
    zs.is_empty() || domain.field().rank(&zs.iter().map(|&z| domain.coords(z)).collect::<Vec<_>>()) == zs.len()
}

pub fn orbit_sampler(domain: &Domain, tuple: &[usize], count: usize, seed: u64) -> Result<OrbitSample> {
    let rel = relations(domain, tuple)?;
    let mut independent_draws = 0usize;
    let samples = (0..count)
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            let z: Vec<usize> = (0..=rel.rank).map(|_| rng.gen_range(0..domain.size())).collect();
            if independent(domain, &z[1..]) {
                independent_draws += 1;
            }
            image(domain, &rel.lambda, &z)
        })
        .collect();
    Ok(OrbitSample {
        rank: rel.rank,
        basis_indices: rel.basis_indices,
        lambda: rel.lambda.iter().map(|r| r.iter().map(|c| c.0).collect()).collect(),
        samples,
        independent_fraction: if count == 0 { 1.0 } else { independent_draws as f64 / count as f64 },
    })
}

pub type TupleDistribution = BTreeMap<Vec<usize>, f64>;

/// Exact law of the sampler over all `q^{n(t+1)}` draws, and the probability
/// that `z_1..z_t` are dependent.
pub fn sampler_distribution(domain: &Domain, tuple: &[usize], budget: u128) -> Result<(TupleDistribution, f64)> {
    let rel = relations(domain, tuple)?;
    let draws = pow_sat(domain.size() as u128, rel.rank as u64 + 1);
    check_budget(draws, budget)?;
    let weight = 1.0 / draws as f64;
    let mut dist = BTreeMap::new();
    let mut dependent = 0u64;
    let mut z = vec![0u32; rel.rank + 1];
    loop {
        let zs: Vec<usize> = z.iter().map(|&v| v as usize).collect();
        if !independent(domain, &zs[1..]) {
            dependent += 1;
        }
        *dist.entry(image(domain, &rel.lambda, &zs)).or_insert(0.0) += weight;
        if !advance_digits(&mut z, domain.size() as u32) {
            break;
        }
    }
    Ok((dist, dependent as f64 / draws as f64))
}

/// Exact law of `(ℓ(y_0), …, ℓ(y_r))` over all invertible affine `ℓ`.
pub fn affine_image_distribution(domain: &Domain, tuple: &[usize], budget: u128) -> Result<TupleDistribution> {
    let maps = all_invertible_affine(domain, budget)?;
    let weight = 1.0 / maps.len() as f64;
    let mut dist = BTreeMap::new();
    for m in &maps {
        let img: Vec<usize> = tuple.iter().map(|&y| m.apply_point(domain, y)).collect();
        *dist.entry(img).or_insert(0.0) += weight;
    }
    Ok(dist)
}

pub fn total_variation(a: &TupleDistribution, b: &TupleDistribution) -> f64 {
    let keys: std::collections::BTreeSet<&Vec<usize>> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::field::Field;
    use crate::util::DEFAULT_BUDGET;

    fn dom(p: u32, t: usize, n: usize) -> Domain {
        Domain::new(Arc::new(Field::canonical(p, t).unwrap()), n).unwrap()
    }

    #[test]
    fn zero_tuple_maps_to_constant_tuples() {
        let d = dom(3, 1, 2);
        let s = orbit_sampler(&d, &[0, 0, 0], 100, 1).unwrap();
        assert_eq!(s.rank, 0);
        assert!(s.samples.iter().all(|t| t[0] == t[1] && t[1] == t[2]));
    }

    #[test]
    fn independent_pair_on_binary_plane() {
        let d = dom(2, 1, 2);
        let tuple = [1, 2];
        let truth = affine_image_distribution(&d, &tuple, DEFAULT_BUDGET).unwrap();
        let (sampled, dependent) = sampler_distribution(&d, &tuple, DEFAULT_BUDGET).unwrap();
        assert_eq!(truth.len(), 12);
        assert_eq!(sampled.len(), 16);
        assert_eq!(dependent, 10.0 / 16.0);
        let tv = total_variation(&truth, &sampled);
        assert!((tv - 0.25).abs() < 1e-12);
        assert!(tv <= dependent);
    }

    #[test]
    fn relations_are_preserved() {
        let d = dom(3, 1, 3);
        let (y0, y1) = (d.index(&[FieldElem(1), FieldElem(2), FieldElem(0)]), d.index(&[FieldElem(0), FieldElem(1), FieldElem(1)]));
        // y2 = y0 + 2 y1, y3 = 0
        let y2 = d.add(y0, d.scale(FieldElem(2), y1));
        let s = orbit_sampler(&d, &[y0, y1, y2, 0], 500, 7).unwrap();
        assert_eq!(s.rank, 2);
        for t in &s.samples {
            // affine relation: s2 − s3 = (s0 − s3) + 2 (s1 − s3)
            let lhs = d.sub(t[2], t[3]);
            let rhs = d.add(d.sub(t[0], t[3]), d.scale(FieldElem(2), d.sub(t[1], t[3])));
            assert_eq!(lhs, rhs);
        }
        assert!(s.independent_fraction > 0.8);
    }

    #[test]
    fn tv_bound_over_small_tuples() {
        for (p, t, n) in [(2, 1, 2), (3, 1, 2), (2, 2, 1)] {
            let d = dom(p, t, n);
            for a in d.points() {
                for b in d.points() {
                    let tuple = [a, b];
                    let truth = affine_image_distribution(&d, &tuple, DEFAULT_BUDGET).unwrap();
                    let (sampled, dependent) = sampler_distribution(&d, &tuple, DEFAULT_BUDGET).unwrap();
                    assert!(total_variation(&truth, &sampled) <= dependent + 1e-12);
                }
            }
        }
    }
}
