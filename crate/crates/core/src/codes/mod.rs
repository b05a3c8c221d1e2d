//! Codes on `K^n`, their local correctors and testers, and the experiments
//! relating them to Gowers norms.
//!
//! Field-valued codes use the alphabet `{1, …, q}` with symbol `s` standing
//! for the field element of index `s − 1`.

pub mod affine;
pub mod lcc;
pub mod ltc;
pub mod orbit;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::domain_fn::{hamming, simplex_extend, DenseFn, Domain, Word};
use crate::error::{Error, Result};
use crate::field::{advance_digits, FieldElem};
use crate::gowers::gowers_norm_exact;
use crate::util::{check_budget, derive_seed, pow_sat, rng_from_seed};

pub use affine::{
    all_invertible_affine, all_invertible_linear, apply_affine, random_invertible_affine, random_invertible_linear,
    AffineMap,
};
pub use lcc::{certify_lcc, corrupt, lcc_distance_audit, simulate_lcc, LccCertification, LineCorrector};
pub use ltc::{extend_decoder, extend_tester, hadamard_blr, ltc_hybrid_experiment, BlrTester};
pub use orbit::{orbit_sampler, OrbitSample};

pub fn symbol_of(x: FieldElem) -> u32 {
    x.0 + 1
}

pub fn elem_of(symbol: u32) -> FieldElem {
    FieldElem(symbol - 1)
}

/// The group of maps a code is closed under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Invariance {
    Affine,
    Linear,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Generator {
    ReedMuller { degree: usize },
    Hadamard,
    Explicit,
}

#[derive(Clone, Debug)]
pub enum QueryModel {
    Line(LineCorrector),
    Blr(BlrTester),
    None,
}

/// An enumerated code with its query model and optional certification.
#[derive(Clone, Debug)]
pub struct CodeSpec {
    domain: Domain,
    m: u32,
    codewords: Vec<Word>,
    index: HashMap<Vec<u32>, usize>,
    generator: Generator,
    invariance: Invariance,
    query_model: QueryModel,
    certification: Option<LccCertification>,
}

impl CodeSpec {
    /// A code given by its words; rejects repeats.
    pub fn explicit(domain: &Domain, m: u32, codewords: Vec<Word>) -> Result<Self> {
        CodeSpec::build(domain, m, codewords, Generator::Explicit, Invariance::None, QueryModel::None)
    }

    fn build(
        domain: &Domain,
        m: u32,
        codewords: Vec<Word>,
        generator: Generator,
        invariance: Invariance,
        query_model: QueryModel,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(codewords.len());
        for (i, w) in codewords.iter().enumerate() {
            if w.domain() != domain || w.m() != m {
                return Err(Error::DimensionMismatch("codeword shape differs from the code".into()));
            }
            if index.insert(w.symbols().to_vec(), i).is_some() {
                return Err(Error::InvalidArgument(format!("codeword {i} repeats an earlier one")));
            }
        }
        Ok(CodeSpec {
            domain: domain.clone(),
            m,
            codewords,
            index,
            generator,
            invariance,
            query_model,
            certification: None,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn codewords(&self) -> &[Word] {
        &self.codewords
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn invariance(&self) -> Invariance {
        self.invariance
    }

    pub fn query_model(&self) -> &QueryModel {
        &self.query_model
    }

    pub fn with_query_model(mut self, model: QueryModel) -> Self {
        self.query_model = model;
        self
    }

    pub fn with_invariance(mut self, invariance: Invariance) -> Self {
        self.invariance = invariance;
        self
    }

    pub fn certification(&self) -> Option<&LccCertification> {
        self.certification.as_ref()
    }

    pub fn set_certification(&mut self, cert: LccCertification) {
        self.certification = Some(cert);
    }

    pub fn contains(&self, w: &Word) -> bool {
        w.domain() == &self.domain && w.m() == self.m && self.index.contains_key(w.symbols())
    }

    pub fn position(&self, w: &Word) -> Option<usize> {
        self.index.get(w.symbols()).copied()
    }

    /// `Δ(w, C)`.
    pub fn distance_to_code(&self, w: &Word) -> Result<f64> {
        let mut best = f64::INFINITY;
        for c in &self.codewords {
            best = best.min(hamming(w, c)?);
        }
        Ok(best)
    }
}

impl Serialize for CodeSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("CodeSpec", 5)?;
        st.serialize_field("field", &self.domain.field().spec())?;
        st.serialize_field("n", &self.domain.n())?;
        st.serialize_field("m", &self.m)?;
        st.serialize_field("params", &self.generator)?;
        let words: Vec<&[u32]> = self.codewords.iter().map(|w| w.symbols()).collect();
        st.serialize_field("codewords", &words)?;
        st.end()
    }
}

/// Exponent vectors with individual degrees `< q` and total degree `≤ d`,
/// in odometer order.
pub fn rm_monomials(q: u32, n: usize, d: usize) -> Vec<Vec<u32>> {
    let mut exps = vec![0u32; n];
    let mut out = Vec::new();
    loop {
        if exps.iter().sum::<u32>() as usize <= d {
            out.push(exps.clone());
        }
        if !advance_digits(&mut exps, q) {
            break;
        }
    }
    out
}

/// All evaluation tables of polynomials of total degree `≤ d` in `n` variables.
pub fn reed_muller(domain: &Domain, d: usize, budget: u128) -> Result<CodeSpec> {
    let field = domain.field();
    let q = field.q();
    let monomials = rm_monomials(q, domain.n(), d);
    let count = pow_sat(q as u128, monomials.len() as u64);
    check_budget(count.saturating_mul(domain.size() as u128), budget)?;
    let tables: Vec<Vec<FieldElem>> = monomials
        .iter()
        .map(|e| {
            domain
                .points()
                .map(|x| {
                    domain
                        .coords(x)
                        .iter()
                        .zip(e)
                        .fold(FieldElem::ONE, |acc, (&c, &k)| field.mul(acc, field.pow(c, k as u64)))
                })
                .collect()
        })
        .collect();
    let mut coeffs = vec![0u32; monomials.len()];
    let mut words = Vec::with_capacity(count as usize);
    loop {
        let symbols = domain
            .points()
            .map(|x| {
                let v = coeffs
                    .iter()
                    .zip(&tables)
                    .fold(FieldElem::ZERO, |acc, (&c, t)| field.add(acc, field.mul(FieldElem(c), t[x])));
                symbol_of(v)
            })
            .collect();
        words.push(Word::new(domain.clone(), q, symbols)?);
        if !advance_digits(&mut coeffs, q) {
            break;
        }
    }
    let corrector = LineCorrector::new(domain, d).map(QueryModel::Line).unwrap_or(QueryModel::None);
    CodeSpec::build(domain, q, words, Generator::ReedMuller { degree: d }, Invariance::Affine, corrector)
}

/// Minimum normalized Hamming distance over distinct pairs. The budget counts pairs.
pub fn min_distance(code: &CodeSpec, budget: u128) -> Result<f64> {
    let n = code.len();
    if n < 2 {
        return Err(Error::TooFewCodewords);
    }
    check_budget((n as u128) * (n as u128 - 1) / 2, budget)?;
    let size = code.domain.size() as f64;
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = code.codewords[i].symbols();
            code.codewords[i + 1..]
                .iter()
                .map(|w| a.iter().zip(w.symbols()).filter(|(x, y)| x != y).count())
                .min()
                .unwrap_or(usize::MAX)
        })
        .min()
        .unwrap();
    Ok(best as f64 / size)
}

/// How `affine_invariance_check` picks maps.
#[derive(Clone, Copy, Debug)]
pub enum InvarianceMode {
    Exhaustive,
    Sampled { maps: usize, seed: u64 },
}

/// True iff `w ∘ ℓ` is a codeword for every codeword `w` and every chosen
/// invertible affine `ℓ`.
pub fn affine_invariance_check(code: &CodeSpec, mode: InvarianceMode, budget: u128) -> Result<bool> {
    let d = &code.domain;
    let maps = match mode {
        InvarianceMode::Exhaustive => all_invertible_affine(d, budget)?,
        InvarianceMode::Sampled { maps, seed } => {
            let mut rng = rng_from_seed(derive_seed(seed, 0));
            (0..maps).map(|_| random_invertible_affine(d.field(), d.n(), &mut rng)).collect()
        }
    };
    Ok(maps.par_iter().all(|map| {
        let sigma = map.point_map(d);
        code.codewords.iter().all(|w| {
            let moved: Vec<u32> = sigma.iter().map(|&y| w.at(y)).collect();
            code.index.contains_key(&moved)
        })
    }))
}

/// `max_i ∥f̂_i − ĝ_i∥_{U^r}` for one pair of words.
pub fn pair_separation(f: &Word, g: &Word, r: usize, budget: u128) -> Result<f64> {
    let (fh, gh) = (simplex_extend(f), simplex_extend(g));
    let mut best: f64 = 0.0;
    for i in 1..=f.m() {
        let diff: DenseFn = fh.coordinate(i)?.sub(&gh.coordinate(i)?)?;
        best = best.max(gowers_norm_exact(&diff, r, budget)?);
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub r: usize,
    /// Upper triangle, row by row: entry for `(i, j)` with `i < j`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub min: f64,
    pub max: f64,
}

/// Pairwise max-coordinate `U^r` distances between distinct codewords.
pub fn gowers_separation(code: &CodeSpec, r: usize, budget: u128) -> Result<SeparationReport> {
    let n = code.len();
    if n < 2 {
        return Err(Error::TooFewCodewords);
    }
    let per_pair = pow_sat(code.domain.size() as u128, r as u64 + 1).saturating_mul(code.m as u128);
    check_budget(per_pair, budget)?;
    let coords: Vec<Vec<DenseFn>> = code.codewords.iter().map(|w| simplex_extend(w).coordinates()).collect();
    let index_pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let pairs = index_pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut best: f64 = 0.0;
            for (a, b) in coords[i].iter().zip(&coords[j]) {
                best = best.max(gowers_norm_exact(&a.sub(b)?, r, budget)?);
            }
            Ok((i, j, best))
        })
        .collect::<Result<Vec<_>>>()?;
    let min = pairs.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let max = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
    Ok(SeparationReport { r, pairs, min, max })
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
    fn reed_muller_sizes() {
        assert_eq!(reed_muller(&dom(2, 1, 2), 1, DEFAULT_BUDGET).unwrap().len(), 8);
        assert_eq!(reed_muller(&dom(2, 1, 2), 2, DEFAULT_BUDGET).unwrap().len(), 16);
        assert_eq!(reed_muller(&dom(2, 2, 1), 2, DEFAULT_BUDGET).unwrap().len(), 64);
        assert_eq!(reed_muller(&dom(2, 2, 2), 2, DEFAULT_BUDGET).unwrap().len(), 4096);
        assert_eq!(reed_muller(&dom(3, 1, 2), 0, DEFAULT_BUDGET).unwrap().len(), 3);
        assert!(reed_muller(&dom(2, 2, 3), 3, DEFAULT_BUDGET).is_err());
    }

    #[test]
    fn min_distance_examples() {
        assert_eq!(min_distance(&reed_muller(&dom(2, 1, 2), 1, DEFAULT_BUDGET).unwrap(), DEFAULT_BUDGET).unwrap(), 0.5);
        assert_eq!(min_distance(&reed_muller(&dom(2, 2, 1), 2, DEFAULT_BUDGET).unwrap(), DEFAULT_BUDGET).unwrap(), 0.5);
        let consts = reed_muller(&dom(3, 1, 2), 0, DEFAULT_BUDGET).unwrap();
        assert_eq!(min_distance(&consts, DEFAULT_BUDGET).unwrap(), 1.0);
        assert_eq!(min_distance(&hadamard_blr(3).unwrap(), DEFAULT_BUDGET).unwrap(), 0.5);
        let d = dom(2, 1, 1);
        let single = CodeSpec::explicit(&d, 2, vec![Word::constant(&d, 2, 1).unwrap()]).unwrap();
        assert!(matches!(min_distance(&single, DEFAULT_BUDGET), Err(Error::TooFewCodewords)));
    }

    #[test]
    fn repeated_codewords_are_rejected() {
        let d = dom(2, 1, 1);
        let w = Word::constant(&d, 2, 1).unwrap();
        assert!(CodeSpec::explicit(&d, 2, vec![w.clone(), w]).is_err());
    }

    #[test]
    fn invariance_examples() {
        let rm = reed_muller(&dom(2, 1, 2), 1, DEFAULT_BUDGET).unwrap();
        assert!(affine_invariance_check(&rm, InvarianceMode::Exhaustive, DEFAULT_BUDGET).unwrap());
        for (p, t, n, deg) in [(2, 1, 2, 2), (2, 2, 1, 2)] {
            let rm = reed_muller(&dom(p, t, n), deg, DEFAULT_BUDGET).unwrap();
            assert!(affine_invariance_check(&rm, InvarianceMode::Exhaustive, DEFAULT_BUDGET).unwrap());
        }
        let d = dom(2, 1, 2);
        let single = CodeSpec::explicit(&d, 2, vec![Word::new(d.clone(), 2, vec![2, 1, 1, 1]).unwrap()]).unwrap();
        assert!(!affine_invariance_check(&single, InvarianceMode::Exhaustive, DEFAULT_BUDGET).unwrap());
        let consts = reed_muller(&d, 0, DEFAULT_BUDGET).unwrap();
        assert!(affine_invariance_check(&consts, InvarianceMode::Sampled { maps: 50, seed: 2 }, DEFAULT_BUDGET).unwrap());
        // Hadamard words are linear, so translations break them
        let h = hadamard_blr(2).unwrap();
        assert!(!affine_invariance_check(&h, InvarianceMode::Exhaustive, DEFAULT_BUDGET).unwrap());
    }

    #[test]
    fn separation_examples() {
        let h = hadamard_blr(2).unwrap();
        let w = &h.codewords()[1];
        assert_eq!(pair_separation(w, w, 2, DEFAULT_BUDGET).unwrap(), 0.0);
        let rep = gowers_separation(&h, 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(rep.pairs.len(), 6);
        assert!(rep.min >= 0.5);
        let rm = reed_muller(&dom(2, 1, 2), 1, DEFAULT_BUDGET).unwrap();
        let rep = gowers_separation(&rm, 2, DEFAULT_BUDGET).unwrap();
        assert!(rep.min > 0.0);
        assert!((rep.max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn code_json_shape() {
        let h = hadamard_blr(1).unwrap();
        let s = serde_json::to_string(&h).unwrap();
        assert!(s.contains(r#""m":2"#));
        assert!(s.contains(r#""codewords":[[1,1],[1,2]]"#));
        assert!(s.contains(r#""generator":"hadamard""#));
    }
}
