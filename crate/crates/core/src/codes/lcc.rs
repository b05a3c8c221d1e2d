//! Line-based local correction for Reed-Muller codes and the LCC simulation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::{elem_of, min_distance, symbol_of, CodeSpec, QueryModel};
use crate::domain_fn::{Domain, Word};
use crate::error::{Error, Result};
use crate::field::FieldElem;
use crate::util::{derive_seed, par_sum, rng_from_seed};

/// Two-sided 95% normal quantile used for Wilson intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Corrects `x` from `d + 1` points `x + t_i y` on a random line through `x`,
/// interpolating the restriction back to `t = 0`.
#[derive(Clone, Debug)]
pub struct LineCorrector {
    domain: Domain,
    d: usize,
    nonzero: Vec<FieldElem>,
}

/// One draw from `M_x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineQuery {
    pub direction: usize,
    pub scalars: Vec<FieldElem>,
    pub points: Vec<usize>,
}

impl LineCorrector {
    pub fn new(domain: &Domain, d: usize) -> Result<Self> {
        let q = domain.field().q() as usize;
        if q <= d + 1 {
            return Err(Error::FieldTooSmall(format!(
                "degree {d} line correction needs q > {}, got q = {q}",
                d + 1
            )));
        }
        Ok(LineCorrector {
            domain: domain.clone(),
            d,
            nonzero: domain.field().elements().skip(1).collect(),
        })
    }

    pub fn queries(&self) -> usize {
        self.d + 1
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    fn query(&self, x: usize, direction: usize, scalars: Vec<FieldElem>) -> LineQuery {
        let points: Vec<usize> = scalars
            .iter()
            .map(|&t| self.domain.add(x, self.domain.scale(t, direction)))
            .collect();
        debug_assert!(
            points.iter().enumerate().all(|(i, a)| points[..i].iter().all(|b| a != b)),
            "query coordinates must be distinct"
        );
        LineQuery {
            direction,
            scalars,
            points,
        }
    }

    /// Uniform nonzero direction and an ordered tuple of distinct nonzero scalars.
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> LineQuery {
        let direction = rng.gen_range(1..self.domain.size());
        let scalars: Vec<FieldElem> = self.nonzero.choose_multiple(rng, self.d + 1).copied().collect();
        self.query(x, direction, scalars)
    }

    /// Every direction with every increasing choice of scalars.
    pub fn all_queries(&self, x: usize) -> Vec<LineQuery> {
        let mut subsets = Vec::new();
        choose(&self.nonzero, self.d + 1, 0, &mut Vec::new(), &mut subsets);
        (1..self.domain.size())
            .flat_map(|y| subsets.iter().map(move |s| (y, s.clone())))
            .map(|(y, s)| self.query(x, y, s))
            .collect()
    }

    /// Value at `t = 0` of the degree-`≤ d` interpolant through `(t_i, v_i)`.
    pub fn decode(&self, query: &LineQuery, symbols: &[u32]) -> u32 {
        let f = self.domain.field();
        let ts = &query.scalars;
        let mut acc = FieldElem::ZERO;
        for (i, (&ti, &s)) in ts.iter().zip(symbols).enumerate() {
            let mut weight = FieldElem::ONE;
            for (j, &tj) in ts.iter().enumerate() {
                if i != j {
                    let num = f.neg(tj);
                    let den = f.inv(f.sub(ti, tj)).expect("scalars are distinct");
                    weight = f.mul(weight, f.mul(num, den));
                }
            }
            acc = f.add(acc, f.mul(weight, elem_of(s)));
        }
        symbol_of(acc)
    }

    pub fn correct(&self, word: &Word, query: &LineQuery) -> u32 {
        let symbols: Vec<u32> = query.points.iter().map(|&y| word.at(y)).collect();
        self.decode(query, &symbols)
    }

    /// Fraction of all queries at `x` on which `word` is corrected to `target(x)`.
    pub fn exhaustive_success(&self, word: &Word, target: &Word, x: usize) -> f64 {
        let qs = self.all_queries(x);
        let good = qs.iter().filter(|q| self.correct(word, q) == target.at(x)).count();
        good as f64 / qs.len() as f64
    }
}

fn choose<T: Copy>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..items.len() {
        cur.push(items[i]);
        choose(items, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Replaces each symbol independently with probability `δ` by a uniform different symbol.
pub fn corrupt<R: Rng + ?Sized>(word: &Word, delta: f64, rng: &mut R) -> Word {
    let m = word.m();
    let symbols = word
        .symbols()
        .iter()
        .map(|&s| {
            if m > 1 && rng.gen::<f64>() < delta {
                let other = rng.gen_range(1..m);
                if other >= s {
                    other + 1
                } else {
                    other
                }
            } else {
                s
            }
        })
        .collect();
    Word::new(word.domain().clone(), m, symbols).expect("symbols stay in range")
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LccSimulation {
    pub delta: f64,
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub ci95: (f64, f64),
    pub queries: usize,
}

/// Each trial draws a codeword, a `δ`-corruption of it, a target `x` and a
/// line; success means the corrector returns the codeword's symbol at `x`.
pub fn simulate_lcc(code: &CodeSpec, delta: f64, trials: u64, seed: u64) -> Result<LccSimulation> {
    let corrector = match code.query_model() {
        QueryModel::Line(c) => c,
        _ => return Err(Error::InvalidArgument("code has no local corrector".into())),
    };
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::OutOfRange(format!("δ = {delta} must lie in [0, 1]")));
    }
    if code.is_empty() {
        return Err(Error::TooFewCodewords);
    }
    let successes: u64 = par_sum(trials as usize, |t| {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let f = &code.codewords()[rng.gen_range(0..code.len())];
        let received = corrupt(f, delta, &mut rng);
        let x = rng.gen_range(0..code.domain().size());
        let q = corrector.sample(x, &mut rng);
        u64::from(corrector.correct(&received, &q) == f.at(x))
    });
    Ok(LccSimulation {
        delta,
        trials,
        successes,
        success_rate: if trials == 0 { 1.0 } else { successes as f64 / trials as f64 },
        ci95: wilson_interval(successes, trials, Z95),
        queries: corrector.queries(),
    })
}

/// Empirical `(r, δ, τ)` certificate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LccCertification {
    pub r: usize,
    pub delta: f64,
    pub tau: f64,
    pub simulation: LccSimulation,
    pub seed: u64,
    /// Measured success is at least `1 − τ`.
    pub certified: bool,
}

/// Measures correction success at corruption rate `δ` and attaches the result to the code.
pub fn certify_lcc(code: &mut CodeSpec, delta: f64, tau: f64, trials: u64, seed: u64) -> Result<LccCertification> {
    let simulation = simulate_lcc(code, delta, trials, seed)?;
    let cert = LccCertification {
        r: simulation.queries,
        delta,
        tau,
        certified: simulation.success_rate >= 1.0 - tau,
        simulation,
        seed,
    };
    code.set_certification(cert.clone());
    Ok(cert)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceAudit {
    pub min_distance: f64,
    pub two_delta: f64,
    pub passes: bool,
}

/// A certified LCC with `τ < 1/2` must have minimum distance at least `2δ`.
pub fn lcc_distance_audit(code: &CodeSpec, budget: u128) -> Result<DistanceAudit> {
    let cert = code
        .certification()
        .filter(|c| c.certified)
        .ok_or(Error::CertificationAbsent)?;
    if cert.tau >= 0.5 {
        return Err(Error::OutOfRange(format!("τ = {} must be below 1/2", cert.tau)));
    }
    let min_distance = min_distance(code, budget)?;
    let two_delta = 2.0 * cert.delta;
    Ok(DistanceAudit {
        min_distance,
        two_delta,
        passes: min_distance >= two_delta - 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::codes::reed_muller;
    use crate::field::Field;
    use crate::util::DEFAULT_BUDGET;

    fn rm422() -> CodeSpec {
        let d = Domain::new(Arc::new(Field::canonical(2, 2).unwrap()), 2).unwrap();
        reed_muller(&d, 2, DEFAULT_BUDGET).unwrap()
    }

    fn corrector(code: &CodeSpec) -> &LineCorrector {
        match code.query_model() {
            QueryModel::Line(c) => c,
            _ => panic!("no corrector"),
        }
    }

    #[test]
    fn small_fields_are_rejected() {
        let d = Domain::new(Arc::new(Field::prime(2).unwrap()), 2).unwrap();
        assert!(matches!(LineCorrector::new(&d, 1), Err(Error::FieldTooSmall(_))));
        assert!(LineCorrector::new(&d, 0).is_ok());
    }

    #[test]
    fn interpolation_is_exact_on_codewords() {
        let code = rm422();
        let c = corrector(&code);
        for w in code.codewords().iter().step_by(97) {
            for x in code.domain().points() {
                assert!(c.all_queries(x).iter().all(|q| c.correct(w, q) == w.at(x)));
            }
        }
    }

    #[test]
    fn queries_avoid_the_target() {
        let code = rm422();
        let c = corrector(&code);
        let w = &code.codewords()[1234];
        for x in [0, 5, 15] {
            let other = if w.at(x) == 1 { 2 } else { 1 };
            let bad = w.with_symbol(x, other).unwrap();
            for q in c.all_queries(x) {
                assert!(!q.points.contains(&x));
                assert_eq!(c.correct(&bad, &q), w.at(x));
            }
        }
        let mut rng = rng_from_seed(0);
        for _ in 0..1000 {
            let q = c.sample(3, &mut rng);
            assert_eq!(q.points.len(), 3);
            assert!(!q.points.contains(&3));
        }
    }

    #[test]
    fn corruption_rate() {
        let code = rm422();
        let w = &code.codewords()[0];
        let mut rng = rng_from_seed(8);
        let mut changed = 0;
        for _ in 0..2000 {
            let c = corrupt(w, 0.25, &mut rng);
            changed += c.symbols().iter().zip(w.symbols()).filter(|(a, b)| a != b).count();
        }
        let rate = changed as f64 / (2000.0 * 16.0);
        assert!((rate - 0.25).abs() < 0.01);
        assert_eq!(&corrupt(w, 0.0, &mut rng), w);
    }

    #[test]
    fn simulation_meets_union_bound() {
        let code = rm422();
        let sim = simulate_lcc(&code, 0.05, 10_000, 17).unwrap();
        assert!(sim.success_rate >= 1.0 - 3.5 * 0.05, "{sim:?}");
        assert!(sim.ci95.0 <= sim.success_rate && sim.success_rate <= sim.ci95.1);
        assert_eq!(simulate_lcc(&code, 0.0, 500, 1).unwrap().successes, 500);
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 0, Z95), (0.0, 1.0));
        let (lo, hi) = wilson_interval(10, 10, Z95);
        assert!(lo > 0.69 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn audit_examples() {
        let mut code = rm422();
        assert!(matches!(lcc_distance_audit(&code, DEFAULT_BUDGET), Err(Error::CertificationAbsent)));
        let cert = certify_lcc(&mut code, 0.1, 0.35, 4000, 3).unwrap();
        assert!(cert.certified);
        let audit = lcc_distance_audit(&code, DEFAULT_BUDGET).unwrap();
        assert_eq!(audit.min_distance, 0.5);
        assert!(audit.passes);

        let cert = certify_lcc(&mut code, 0.0, 0.0, 200, 3).unwrap();
        assert!(cert.certified);
        assert!(lcc_distance_audit(&code, DEFAULT_BUDGET).unwrap().passes);
    }

    #[test]
    fn close_codewords_cannot_both_be_corrected() {
        // two words at distance 2/16; the midpoint is within 1/16 of each
        let code = rm422();
        let d = code.domain().clone();
        let f = code.codewords()[0].clone();
        let g = f.with_symbol(5, 2).unwrap().with_symbol(9, 3).unwrap();
        let mut broken = CodeSpec::explicit(&d, 4, vec![f.clone(), g.clone()])
            .unwrap()
            .with_query_model(code.query_model().clone());
        let mid = f.with_symbol(5, 2).unwrap();
        let c = corrector(&code);
        let (sf, sg) = (c.exhaustive_success(&mid, &f, 9), c.exhaustive_success(&mid, &g, 9));
        assert!(sf + sg <= 1.0);
        assert!(sf.min(sg) < 1.0 - 0.35);
        let cert = certify_lcc(&mut broken, 0.1, 0.35, 2000, 5).unwrap();
        let audit = lcc_distance_audit(&broken, DEFAULT_BUDGET);
        assert!(!cert.certified || !audit.unwrap().passes);
    }
}
