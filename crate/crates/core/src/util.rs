//! Shared plumbing: work budgets, seed derivation and reproducible reductions.

use std::ops::Add;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default cap on the number of summation terms an exact routine may touch.
pub const DEFAULT_BUDGET: u128 = 1 << 26;

/// Block length used when splitting reductions across workers. Fixed so the
/// summation tree, and therefore the floating-point result, never depends on
/// the number of threads.
pub const REDUCTION_BLOCK: usize = 1024;

pub type Rng = ChaCha8Rng;

pub fn check_budget(needed: u128, budget: u128) -> Result<()> {
    if needed > budget {
        Err(Error::BudgetExceeded { needed, budget })
    } else {
        Ok(())
    }
}

/// `base^exp`, saturating at `u128::MAX`.
pub fn pow_sat(base: u128, exp: u64) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
        if acc == u128::MAX {
            break;
        }
    }
    acc
}

/// SplitMix64 finalizer; derives independent worker seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pairwise (cascade) summation with a fixed split order.
pub fn pairwise_sum<T>(xs: &[T]) -> T
where
    T: Copy + Default + Add<Output = T>,
{
    match xs.len() {
        0 => T::default(),
        1 => xs[0],
        2 => xs[0] + xs[1],
        len => {
            let mid = len / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Sums `term(i)` for `i in 0..len` in parallel. Each block of
/// [`REDUCTION_BLOCK`] indices is summed sequentially and the block partials
/// are combined pairwise in index order.
pub fn par_sum<T, F>(len: usize, term: F) -> T
where
    T: Copy + Default + Add<Output = T> + Send,
    F: Fn(usize) -> T + Sync,
{
    let blocks = len.div_ceil(REDUCTION_BLOCK);
    let partials: Vec<T> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * REDUCTION_BLOCK;
            let end = (start + REDUCTION_BLOCK).min(len);
            let mut acc = T::default();
            for i in start..end {
                acc = acc + term(i);
            }
            acc
        })
        .collect();
    pairwise_sum(&partials)
}

/// Index of the minimum of `score`, lowest index winning ties.
pub fn par_argmin<F>(len: usize, score: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync,
{
    (0..len)
        .into_par_iter()
        .map(|i| (i, score(i)))
        .reduce_with(|a, b| {
            if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                b
            } else {
                a
            }
        })
}

/// Binomial coefficient, saturating.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}
