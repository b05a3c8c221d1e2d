//! The Hadamard code with the BLR tester, multilinear extensions of
//! decoding and testing operators, and the hybrid-word experiment.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use super::{random_invertible_affine, random_invertible_linear, CodeSpec, Generator, Invariance, QueryModel};
use crate::domain_fn::{simplex_extend, Domain, Word};
use crate::error::{Error, Result};
use crate::field::{advance_digits, Field, FieldElem};
use crate::gowers::gowers_norm_exact;
use crate::util::{derive_seed, par_sum, rng_from_seed};

/// Queries `(y, z, y + z)` and accepts iff `w(y) ⊕ w(z) = w(y + z)`.
/// All `(y, z)` pairs are used, including those with repeated points.
#[derive(Clone, Debug)]
pub struct BlrTester {
    domain: Domain,
}

impl BlrTester {
    pub fn new(domain: &Domain) -> Result<Self> {
        let f = domain.field();
        if f.p() != 2 || f.t() != 1 {
            return Err(Error::InvalidField("BLR testing is defined over F_2".into()));
        }
        Ok(BlrTester { domain: domain.clone() })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn queries(&self) -> usize {
        3
    }

    /// Testing operator on symbols in `{1, 2}`.
    pub fn accepts(symbols: &[u32]) -> bool {
        ((symbols[0] - 1) ^ (symbols[1] - 1)) == symbols[2] - 1
    }

    pub fn tuple(&self, y: usize, z: usize) -> [usize; 3] {
        [y, z, self.domain.add(y, z)]
    }

    /// Acceptance probability over all `2^{2n}` pairs.
    pub fn exact_acceptance(&self, w: &Word) -> f64 {
        let size = self.domain.size();
        let accepted: u64 = par_sum(size, |y| {
            (0..size)
                .filter(|&z| {
                    let t = self.tuple(y, z);
                    BlrTester::accepts(&[w.at(t[0]), w.at(t[1]), w.at(t[2])])
                })
                .count() as u64
        });
        accepted as f64 / (size * size) as f64
    }

    pub fn sampled_acceptance(&self, w: &Word, samples: usize, seed: u64) -> f64 {
        let mut rng = rng_from_seed(derive_seed(seed, 0));
        let size = self.domain.size();
        let accepted = (0..samples)
            .filter(|_| {
                let t = self.tuple(rng.gen_range(0..size), rng.gen_range(0..size));
                BlrTester::accepts(&[w.at(t[0]), w.at(t[1]), w.at(t[2])])
            })
            .count();
        accepted as f64 / samples.max(1) as f64
    }
}

/// Linear functionals `x ↦ a·x` on `F_2^n`, alphabet `{1, 2}`, with the BLR tester.
pub fn hadamard_blr(n: usize) -> Result<CodeSpec> {
    let domain = Domain::new(Arc::new(Field::prime(2)?), n)?;
    let f = domain.field();
    let words = domain
        .points()
        .map(|a| {
            let ac = domain.coords(a);
            let symbols = domain.points().map(|x| f.dot(&ac, &domain.coords(x)).0 + 1).collect();
            Word::new(domain.clone(), 2, symbols)
        })
        .collect::<Result<Vec<_>>>()?;
    let tester = BlrTester::new(&domain)?;
    CodeSpec::build(&domain, 2, words, Generator::Hadamard, Invariance::Linear, QueryModel::Blr(tester))
}

/// `D̂(z_1, …, z_r) = Σ_ℓ e_{D(ℓ)} Π_i (z_i)_{ℓ_i}` for `D: Σ^r → Σ`.
pub fn extend_decoder(decoder: impl Fn(&[u32]) -> u32, m: u32, z: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; m as usize];
    for_each_symbol_tuple(m, z.len(), |ell| {
        let weight: f64 = ell.iter().zip(z).map(|(&l, zi)| zi[l as usize - 1]).product();
        if weight != 0.0 {
            out[decoder(ell) as usize - 1] += weight;
        }
    });
    out
}

/// `D̂(z_1, …, z_r) = Σ_ℓ D(ℓ) Π_i (z_i)_{ℓ_i}` for `D: Σ^r → {0, 1}`.
pub fn extend_tester(tester: impl Fn(&[u32]) -> bool, m: u32, z: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for_each_symbol_tuple(m, z.len(), |ell| {
        if tester(ell) {
            acc += ell.iter().zip(z).map(|(&l, zi)| zi[l as usize - 1]).product::<f64>();
        }
    });
    acc
}

fn for_each_symbol_tuple(m: u32, r: usize, mut f: impl FnMut(&[u32])) {
    let mut digits = vec![0u32; r];
    loop {
        let ell: Vec<u32> = digits.iter().map(|d| d + 1).collect();
        f(&ell);
        if !advance_digits(&mut digits, m) {
            break;
        }
    }
}

/// `H(x) = f(x)` or `g(x)` with probability 1/2 each, independently.
pub fn sample_hybrid<R: Rng + ?Sized>(f: &Word, g: &Word, rng: &mut R) -> Word {
    let symbols = f
        .symbols()
        .iter()
        .zip(g.symbols())
        .map(|(&a, &b)| if rng.gen::<bool>() { a } else { b })
        .collect();
    Word::new(f.domain().clone(), f.m(), symbols).expect("same shape")
}

#[derive(Clone, Debug, Serialize)]
pub struct HybridReport {
    pub trials: usize,
    pub seed: u64,
    /// Maps used for `H ∘ ℓ`: the code's own invariance group.
    pub maps: Invariance,
    pub mean_acceptance: f64,
    pub acceptance_stderr: f64,
    /// Acceptance value → count, values rendered to 6 decimals.
    pub acceptance_histogram: BTreeMap<String, usize>,
    pub mean_distance: f64,
    pub distance_histogram: BTreeMap<String, usize>,
    /// `Δ(H, C) ≥ δ/3` with `δ` the minimum distance.
    pub far_threshold: f64,
    pub far_fraction: f64,
    /// `∥f̂_i − ĝ_i∥_{U^{r−1}}` for each symbol `i`.
    pub coordinate_distances: Vec<f64>,
    /// `1 / (2 r m^r)`.
    pub gowers_threshold: f64,
    pub gowers_small: bool,
    /// `max |mean Ĥ − (f̂ + ĝ)/2|` over points and coordinates.
    pub hat_mean_error: f64,
}

/// Samples hybrids of codewords `f` and `g` and records BLR acceptance of
/// `H ∘ ℓ` for a random invertible map `ℓ` together with `Δ(H, C)`.
pub fn ltc_hybrid_experiment(
    code: &CodeSpec,
    f_index: usize,
    g_index: usize,
    trials: usize,
    seed: u64,
    budget: u128,
) -> Result<HybridReport> {
    let tester = match code.query_model() {
        QueryModel::Blr(t) => t,
        _ => return Err(Error::InvalidArgument("code has no BLR tester".into())),
    };
    let words = code.codewords();
    let (f, g) = match (words.get(f_index), words.get(g_index)) {
        (Some(f), Some(g)) => (f, g),
        _ => return Err(Error::OutOfRange("codeword index out of range".into())),
    };
    let d = code.domain();
    let m = code.m();
    let r = tester.queries();
    let (fh, gh) = (simplex_extend(f), simplex_extend(g));
    let coordinate_distances = (1..=m)
        .map(|i| gowers_norm_exact(&fh.coordinate(i)?.sub(&gh.coordinate(i)?)?, r - 1, budget))
        .collect::<Result<Vec<f64>>>()?;
    let gowers_threshold = 1.0 / (2.0 * r as f64 * (m as f64).powi(r as i32));
    let min_dist = if code.len() >= 2 {
        super::min_distance(code, budget)?
    } else {
        1.0
    };
    let far_threshold = min_dist / 3.0;

    let mut hat_sum = vec![0.0; d.size() * m as usize];
    let mut acceptance = Vec::with_capacity(trials);
    let mut distance = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let h = sample_hybrid(f, g, &mut rng);
        for x in d.points() {
            hat_sum[x * m as usize + h.at(x) as usize - 1] += 1.0;
        }
        let map = match code.invariance() {
            Invariance::Linear => random_invertible_linear(d.field(), d.n(), &mut rng),
            _ => random_invertible_affine(d.field(), d.n(), &mut rng),
        };
        let moved = super::apply_affine(&h, &map)?;
        acceptance.push(tester.exact_acceptance(&moved));
        distance.push(code.distance_to_code(&h)?);
    }

    let mut hat_mean_error: f64 = 0.0;
    if trials > 0 {
        for x in d.points() {
            for (i, (a, b)) in fh.at(x).iter().zip(gh.at(x)).enumerate() {
                let mean = hat_sum[x * m as usize + i] / trials as f64;
                hat_mean_error = hat_mean_error.max((mean - (a + b) / 2.0).abs());
            }
        }
    }
    let n = trials.max(1) as f64;
    let mean_acceptance = acceptance.iter().sum::<f64>() / n;
    let var = acceptance.iter().map(|a| (a - mean_acceptance).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let histogram = |xs: &[f64]| {
        let mut h = BTreeMap::new();
        for x in xs {
            *h.entry(format!("{x:.6}")).or_insert(0) += 1;
        }
        h
    };
    Ok(HybridReport {
        trials,
        seed,
        maps: code.invariance(),
        mean_acceptance: if trials == 0 { 0.0 } else { mean_acceptance },
        acceptance_stderr: (var / n).sqrt(),
        acceptance_histogram: histogram(&acceptance),
        mean_distance: distance.iter().sum::<f64>() / n,
        distance_histogram: histogram(&distance),
        far_threshold,
        far_fraction: distance.iter().filter(|&&x| x >= far_threshold).count() as f64 / n,
        gowers_small: coordinate_distances.iter().all(|&c| c <= gowers_threshold),
        coordinate_distances,
        gowers_threshold,
        hat_mean_error,
    })
}

/// A word from a Boolean function given on coordinate tuples.
pub fn boolean_word(domain: &Domain, f: impl Fn(&[FieldElem]) -> bool) -> Word {
    let symbols = domain.points().map(|x| u32::from(f(&domain.coords(x))) + 1).collect();
    Word::new(domain.clone(), 2, symbols).expect("binary symbols")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::lcc::LineCorrector;
    use crate::domain_fn::hamming;
    use crate::util::DEFAULT_BUDGET;

    fn bit(x: FieldElem) -> bool {
        x.0 == 1
    }

    // Fourier oracle: accept = 1/2 + 1/2 Σ_a ŵ(a)^3 for the ±1 form of w.
    fn fourier_acceptance(w: &Word) -> f64 {
        let d = w.domain();
        let f = d.field();
        let size = d.size() as f64;
        let cube: f64 = d
            .points()
            .map(|a| {
                let ac = d.coords(a);
                let c: f64 = d
                    .points()
                    .map(|x| {
                        let s = if w.at(x) == 2 { -1.0 } else { 1.0 };
                        let chi = if f.dot(&ac, &d.coords(x)).0 == 1 { -1.0 } else { 1.0 };
                        s * chi
                    })
                    .sum::<f64>()
                    / size;
                c.powi(3)
            })
            .sum();
        0.5 + 0.5 * cube
    }

    #[test]
    fn codewords_always_pass() {
        for n in 1..=4 {
            let code = hadamard_blr(n).unwrap();
            let QueryModel::Blr(t) = code.query_model() else { panic!() };
            assert_eq!(code.len(), 1 << n);
            for w in code.codewords() {
                assert_eq!(t.exact_acceptance(w), 1.0);
            }
        }
    }

    #[test]
    fn perturbed_codeword_rejection() {
        let code = hadamard_blr(3).unwrap();
        let QueryModel::Blr(t) = code.query_model() else { panic!() };
        let w = &code.codewords()[5];
        let flipped = w.with_symbol(3, 3 - w.at(3)).unwrap();
        assert_eq!(1.0 - t.exact_acceptance(&flipped), 18.0 / 64.0);
        let at_origin = w.with_symbol(0, 3 - w.at(0)).unwrap();
        assert_eq!(1.0 - t.exact_acceptance(&at_origin), 22.0 / 64.0);
        assert!((t.exact_acceptance(&flipped) - fourier_acceptance(&flipped)).abs() < 1e-12);
    }

    #[test]
    fn bent_word_is_rejected_often() {
        let code = hadamard_blr(4).unwrap();
        let QueryModel::Blr(t) = code.query_model() else { panic!() };
        let d = code.domain();
        let bent = boolean_word(d, |x| bit(x[0]) & bit(x[1]) ^ bit(x[2]) & bit(x[3]));
        let acc = t.exact_acceptance(&bent);
        assert_eq!(acc, 0.53125);
        assert!(acc <= 0.75);
        assert!((acc - fourier_acceptance(&bent)).abs() < 1e-12);
        assert_eq!(code.distance_to_code(&bent).unwrap(), 0.375);
        let sampled = t.sampled_acceptance(&bent, 20_000, 4);
        assert!((sampled - acc).abs() < 0.02);
    }

    #[test]
    fn non_binary_fields_are_rejected() {
        let d = Domain::new(Arc::new(Field::prime(3).unwrap()), 2).unwrap();
        assert!(BlrTester::new(&d).is_err());
    }

    #[test]
    fn extension_matches_operator_on_vertices() {
        for m in 1..=3u32 {
            for r in 1..=3usize {
                let dec = |l: &[u32]| (l.iter().sum::<u32>() % m) + 1;
                let test = |l: &[u32]| l.iter().sum::<u32>() % 2 == 0;
                for_each_symbol_tuple(m, r, |ell| {
                    let z: Vec<Vec<f64>> = ell
                        .iter()
                        .map(|&l| (1..=m).map(|j| f64::from(j == l)).collect())
                        .collect();
                    let out = extend_decoder(dec, m, &z);
                    let mut e = vec![0.0; m as usize];
                    e[dec(ell) as usize - 1] = 1.0;
                    assert_eq!(out, e);
                    assert_eq!(extend_tester(test, m, &z), f64::from(test(ell)));
                });
            }
        }
    }

    #[test]
    fn extension_on_uniform_inputs_is_the_histogram() {
        // D(a, b) = a on m = 2 gives (1/2, 1/2); D(a, b) = max(a, b) gives (1/4, 3/4)
        let u = vec![vec![0.5, 0.5]; 2];
        assert_eq!(extend_decoder(|l| l[0], 2, &u), vec![0.5, 0.5]);
        assert_eq!(extend_decoder(|l| l[0].max(l[1]), 2, &u), vec![0.25, 0.75]);
        let z = vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3], vec![0.0, 0.9, 0.1]];
        let out = extend_decoder(|l| l[0].min(l[2]), 3, &z);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn extension_rewrites_the_decoding_condition() {
        // E⟨f̂(x), D̂(f̂(y_1), …)⟩ equals the probability the corrector is right
        let d = Domain::new(Arc::new(Field::canonical(2, 2).unwrap()), 2).unwrap();
        let rm = crate::codes::reed_muller(&d, 2, DEFAULT_BUDGET).unwrap();
        let c = LineCorrector::new(&d, 2).unwrap();
        let mut rng = rng_from_seed(12);
        let word = crate::codes::corrupt(&rm.codewords()[77], 0.2, &mut rng);
        let target = &rm.codewords()[77];
        let (fh, th) = (simplex_extend(&word), simplex_extend(target));
        let x = 6;
        let qs = c.all_queries(x);
        let lhs: f64 = qs
            .iter()
            .map(|q| {
                let z: Vec<Vec<f64>> = q.points.iter().map(|&y| fh.at(y).to_vec()).collect();
                let dh = extend_decoder(|l| c.decode(q, l), 4, &z);
                th.at(x).iter().zip(&dh).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum::<f64>()
            / qs.len() as f64;
        assert!((lhs - c.exhaustive_success(&word, target, x)).abs() < 1e-12);
    }

    #[test]
    fn hybrid_of_a_word_with_itself() {
        let code = hadamard_blr(3).unwrap();
        let rep = ltc_hybrid_experiment(&code, 3, 3, 200, 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(rep.mean_acceptance, 1.0);
        assert_eq!(rep.mean_distance, 0.0);
        assert_eq!(rep.hat_mean_error, 0.0);
    }

    #[test]
    fn hybrid_mean_is_the_midpoint() {
        let code = hadamard_blr(3).unwrap();
        let rep = ltc_hybrid_experiment(&code, 1, 6, 10_000, 2, DEFAULT_BUDGET).unwrap();
        // each mean is an average of 10^4 fair bits
        assert!(rep.hat_mean_error < 0.03, "{}", rep.hat_mean_error);
        let (f, g) = (&code.codewords()[1], &code.codewords()[6]);
        let h = sample_hybrid(f, g, &mut rng_from_seed(1));
        let split = hamming(&h, f).unwrap() + hamming(&h, g).unwrap();
        assert!((split - hamming(f, g).unwrap()).abs() < 1e-12);
    }
}
