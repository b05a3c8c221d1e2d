//! Finite ε-nets for the `U^r` metric built from polynomial factors with
//! lattice-valued colourings, and the covering check.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::domain_fn::{DenseFn, Domain};
use crate::error::{Error, Result};
use crate::factors::{decompose_with, DecompositionStatus, InverseGowersOracle, PolyFactor};
use crate::field::advance_digits;
use crate::gowers::gowers_norm_exact;
use crate::ncpoly::{coefficient_count_bound, enumerate_ncpolys, NCPoly, TorusValue};
use crate::util::{check_budget, derive_seed, par_argmin, pow_sat, rng_from_seed};

/// Slack on the `3ε` covering radius.
pub const COVER_TOL: f64 = 1e-9;

/// Correlation floor used by the decomposition inside the covering chain.
pub const CHAIN_RHO_MIN: f64 = 0.05;

/// Size of the counting bound: natural log always, exact value when it is an
/// integer of manageable size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetSizeBound {
    pub ln: f64,
    #[serde(serialize_with = "ser_big")]
    pub exact: Option<BigUint>,
}

fn ser_big<S: Serializer>(v: &Option<BigUint>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(b) => s.serialize_some(&b.to_string()),
        None => s.serialize_none(),
    }
}

/// `(p^{C(nt+r−1, r−1)·r})^k · (4/ε²)^{p^{rk}}`.
pub fn net_size_bound(p: u32, t: usize, n: usize, r: u32, eps: f64, k: u32) -> Result<NetSizeBound> {
    if p < 2 || t == 0 || n == 0 || r == 0 {
        return Err(Error::InvalidArgument("net bound parameters must be positive".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange(format!("ε = {eps} must lie in (0, 1)")));
    }
    let coeffs = coefficient_count_bound(p, t, n, r);
    let lattice = 4.0 / (eps * eps);
    let cells_exp = r as u64 * k as u64;
    let ln = k as f64 * coeffs as f64 * (p as f64).ln() + (p as f64).powf(cells_exp as f64) * lattice.ln();

    let rounded = lattice.round();
    let exact = if (lattice - rounded).abs() < 1e-9 && ln < 1e6 {
        let cells = pow_sat(p as u128, cells_exp);
        let first = BigUint::from(p).pow((coeffs * k as u128) as u32);
        let second = BigUint::from(rounded as u64).pow(cells as u32);
        Some(first * second)
    } else {
        None
    };
    Ok(NetSizeBound { ln, exact })
}

/// Points of `ε(Z + iZ)` in the closed unit disk, ordered by imaginary then real part.
pub fn disk_lattice(eps: f64) -> Vec<Complex64> {
    let m = (1.0 / eps).floor() as i64 + 1;
    let mut out = Vec::new();
    for b in -m..=m {
        for a in -m..=m {
            let z = Complex64::new(a as f64 * eps, b as f64 * eps);
            if z.norm_sqr() <= 1.0 + 1e-12 {
                out.push(z);
            }
        }
    }
    out
}

/// Index of the lattice point nearest to `z`, lowest index on ties.
pub fn round_to_disk_lattice(z: Complex64, lattice: &[Complex64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, w) in lattice.iter().enumerate() {
        let d = (z - w).norm_sqr();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// One net element `τ(P_{i_1}, …, P_{i_k})`.
#[derive(Clone, Debug)]
pub struct NetElement {
    /// Indices into the net's polynomial list.
    pub factor: Vec<usize>,
    /// `τ` on the attainable label tuples, as lattice indices.
    pub tau: Vec<(Vec<TorusValue>, usize)>,
    pub function: DenseFn,
}

#[derive(Clone, Debug)]
pub struct NetSpec {
    domain: Domain,
    r: u32,
    eps: f64,
    k: u32,
    lattice: Vec<Complex64>,
    polys: Vec<NCPoly>,
    elements: Vec<NetElement>,
    index: HashMap<Vec<usize>, usize>,
}

impl NetSpec {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn lattice(&self) -> &[Complex64] {
        &self.lattice
    }

    pub fn polys(&self) -> &[NCPoly] {
        &self.polys
    }

    pub fn elements(&self) -> &[NetElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Index of the element equal to `f`, when `f` is lattice valued.
    pub fn position(&self, f: &DenseFn) -> Option<usize> {
        let key: Option<Vec<usize>> = f
            .values()
            .iter()
            .map(|z| {
                let i = round_to_disk_lattice(*z, &self.lattice);
                ((self.lattice[i] - z).norm() < 1e-12).then_some(i)
            })
            .collect();
        key.and_then(|k| self.index.get(&k).copied())
    }
}

#[derive(Serialize)]
struct TauEntry {
    label: Vec<[u64; 2]>,
    value: [f64; 2],
}

#[derive(Serialize)]
struct ElementRepr {
    factor: Vec<usize>,
    tau: Vec<TauEntry>,
}

impl Serialize for NetSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let elements: Vec<ElementRepr> = self
            .elements
            .iter()
            .map(|e| ElementRepr {
                factor: e.factor.clone(),
                tau: e
                    .tau
                    .iter()
                    .map(|(label, i)| TauEntry {
                        label: label
                            .iter()
                            .map(|v| [v.numerator(), v.log_denominator() as u64])
                            .collect(),
                        value: [self.lattice[*i].re, self.lattice[*i].im],
                    })
                    .collect(),
            })
            .collect();
        let mut st = s.serialize_struct("NetSpec", 7)?;
        st.serialize_field("field", &self.domain.field().spec())?;
        st.serialize_field("n", &self.domain.n())?;
        st.serialize_field("r", &self.r)?;
        st.serialize_field("epsilon", &self.eps)?;
        st.serialize_field("k", &self.k)?;
        st.serialize_field("polys", &self.polys)?;
        st.serialize_field("elements", &elements)?;
        st.end()
    }
}

/// Number of `τ` assignments `build_net` would materialize.
pub fn net_work(domain: &Domain, r: u32, eps: f64, k: u32, budget: u128) -> Result<u128> {
    let polys = enumerate_ncpolys(domain, r, budget)?;
    let lattice = disk_lattice(eps).len() as u128;
    let mut total: u128 = 0;
    for_each_tuple(polys.len(), k as usize, |tuple| {
        let factor = PolyFactor::new(domain, tuple.iter().map(|&i| polys[i].clone()).collect()).unwrap();
        total = total.saturating_add(pow_sat(lattice, factor.num_cells() as u64));
    });
    Ok(total)
}

fn for_each_tuple(len: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if len == 0 && k > 0 {
        return;
    }
    let mut digits = vec![0u32; k];
    let tuple = |d: &[u32]| d.iter().map(|&x| x as usize).collect::<Vec<_>>();
    f(&tuple(&digits));
    while advance_digits(&mut digits, len as u32) {
        f(&tuple(&digits));
    }
}

/// Materializes every `τ(P_1, …, P_k)` with `P_i` from the degree-`<r`
/// enumeration and `τ` valued in the disk lattice. Elements are deduplicated
/// as functions, first construction kept.
pub fn build_net(domain: &Domain, r: u32, eps: f64, k: u32, budget: u128) -> Result<NetSpec> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange(format!("ε = {eps} must lie in (0, 1)")));
    }
    check_budget(net_work(domain, r, eps, k, budget)?, budget)?;
    let polys = enumerate_ncpolys(domain, r, budget)?;
    let lattice = disk_lattice(eps);
    let mut factors = Vec::new();
    for_each_tuple(polys.len(), k as usize, |tuple| factors.push(tuple.to_vec()));

    let per_factor: Vec<Vec<(Vec<usize>, NetElement)>> = factors
        .par_iter()
        .map(|tuple| {
            let factor = PolyFactor::new(domain, tuple.iter().map(|&i| polys[i].clone()).collect()).unwrap();
            let cells = factor.num_cells();
            let reps: Vec<usize> = (0..cells)
                .map(|c| domain.points().find(|&x| factor.cell(x) == c).unwrap())
                .collect();
            let mut out = Vec::new();
            let mut colours = vec![0u32; cells];
            loop {
                let key: Vec<usize> = domain.points().map(|x| colours[factor.cell(x)] as usize).collect();
                let function = DenseFn::from_fn(domain, |x| lattice[key[x]]);
                let tau = reps
                    .iter()
                    .zip(&colours)
                    .map(|(&x, &c)| (factor.label(x).to_vec(), c as usize))
                    .collect();
                out.push((
                    key,
                    NetElement {
                        factor: tuple.clone(),
                        tau,
                        function,
                    },
                ));
                if !advance_digits(&mut colours, lattice.len() as u32) {
                    break;
                }
            }
            out
        })
        .collect();

    let mut index = HashMap::new();
    let mut elements = Vec::new();
    for (key, element) in per_factor.into_iter().flatten() {
        if let std::collections::hash_map::Entry::Vacant(slot) = index.entry(key) {
            slot.insert(elements.len());
            elements.push(element);
        }
    }
    Ok(NetSpec {
        domain: domain.clone(),
        r,
        eps,
        k,
        lattice,
        polys,
        elements,
        index,
    })
}

/// `φ(f)`: the element minimizing `∥f − h∥_{U^r}`, lowest index on ties.
pub fn nearest_in_net(f: &DenseFn, net: &NetSpec, budget: u128) -> Result<(usize, f64)> {
    if f.domain() != &net.domain {
        return Err(Error::DimensionMismatch("function and net domains differ".into()));
    }
    if net.is_empty() {
        return Err(Error::EmptyNet);
    }
    let r = net.r as usize;
    check_budget(pow_sat(f.domain().size() as u128, r as u64 + 1), budget)?;
    par_argmin(net.len(), |i| {
        gowers_norm_exact(&f.sub(&net.elements[i].function).unwrap(), r, budget).unwrap()
    })
    .ok_or(Error::EmptyNet)
}

/// The three links of the covering argument for one input.
#[derive(Clone, Debug, Serialize)]
pub struct ChainTrial {
    pub projection_distance: f64,
    /// `∥f − E[f|B]∥_{U^r}` from the decomposition.
    pub residual: f64,
    /// `∥E[f|B] − round(E[f|B])∥_∞`.
    pub rounding: f64,
    /// `round(E[f|B])` is a net element.
    pub rounded_in_net: bool,
    /// `∥f − round(E[f|B])∥_{U^r}`.
    pub chain_distance: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverReport {
    pub trials: usize,
    pub max_distance: f64,
    pub radius: f64,
    pub passed: bool,
    pub chain_failures: usize,
    pub chain: Vec<ChainTrial>,
}

/// Checks one input against the chain `residual ≤ ε`, `rounding ≤ 2ε`,
/// `φ(f)` no farther than the rounded approximant.
pub fn chain_trial(f: &DenseFn, net: &NetSpec, oracle: &InverseGowersOracle, budget: u128) -> Result<ChainTrial> {
    let eps = net.eps;
    let r = net.r as usize;
    let (_, projection_distance) = nearest_in_net(f, net, budget)?;
    let dec = decompose_with(f, oracle, eps, CHAIN_RHO_MIN, budget)?;
    let rounded = DenseFn::from_fn(f.domain(), |x| {
        net.lattice[round_to_disk_lattice(dec.approximant.at(x), &net.lattice)]
    });
    let rounding = rounded.max_abs_diff(&dec.approximant)?;
    let rounded_in_net = dec.factor.complexity() <= net.k as usize && net.position(&rounded).is_some();
    let chain_distance = gowers_norm_exact(&f.sub(&rounded)?, r, budget)?;
    let holds = dec.status == DecompositionStatus::Converged
        && dec.residual_norm <= eps + COVER_TOL
        && rounding <= 2.0 * eps + COVER_TOL
        && rounded_in_net
        && chain_distance <= dec.residual_norm + rounding + COVER_TOL
        && projection_distance <= chain_distance + COVER_TOL;
    Ok(ChainTrial {
        projection_distance,
        residual: dec.residual_norm,
        rounding,
        rounded_in_net,
        chain_distance,
        holds,
    })
}

/// Projects `trials` seeded random bounded functions onto the net.
pub fn cover_check(net: &NetSpec, trials: usize, seed: u64, budget: u128) -> Result<CoverReport> {
    let oracle = InverseGowersOracle::new(&net.domain, net.r as usize, budget)?;
    let chain = (0..trials)
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            let f = DenseFn::random_bounded(&net.domain, &mut rng);
            chain_trial(&f, net, &oracle, budget)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(cover_report(net.eps, chain))
}

pub fn cover_report(eps: f64, chain: Vec<ChainTrial>) -> CoverReport {
    let max_distance = chain.iter().map(|c| c.projection_distance).fold(0.0, f64::max);
    let radius = 3.0 * eps;
    CoverReport {
        trials: chain.len(),
        max_distance,
        radius,
        passed: max_distance <= radius + COVER_TOL,
        chain_failures: chain.iter().filter(|c| !c.holds).count(),
        chain,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::field::Field;
    use crate::ncpoly::phase;
    use crate::util::DEFAULT_BUDGET;

    fn f2(n: usize) -> Domain {
        Domain::new(Arc::new(Field::prime(2).unwrap()), n).unwrap()
    }

    #[test]
    fn bound_examples() {
        let b = net_size_bound(2, 1, 1, 2, 0.5, 1).unwrap();
        assert_eq!(b.exact, Some(BigUint::from(1_048_576u64)));
        assert!((b.ln - (1_048_576f64).ln()).abs() < 1e-9);
        let b = net_size_bound(2, 1, 3, 2, 0.5, 0).unwrap();
        assert_eq!(b.exact, Some(BigUint::from(16u32)));
        let b = net_size_bound(2, 1, 1, 2, 0.4, 1).unwrap();
        assert_eq!(b.exact, Some(BigUint::from(16u64 * 390_625)));
        assert!((b.ln - (16.0f64.ln() + 4.0 * 25.0f64.ln())).abs() < 1e-9);
        assert!(net_size_bound(2, 1, 1, 2, 0.3, 1).unwrap().exact.is_none());
        assert!(net_size_bound(2, 1, 1, 2, 1.5, 1).is_err());
    }

    #[test]
    fn lattice_in_disk() {
        let l = disk_lattice(0.4);
        assert_eq!(l.len(), 21);
        assert!(l.iter().all(|z| z.norm() <= 1.0 + 1e-12));
        assert_eq!(disk_lattice(0.5).len(), 13);
        let i = round_to_disk_lattice(Complex64::new(0.71, 0.71), &l);
        assert_eq!(l[i], Complex64::new(0.8, 0.4));
    }

    #[test]
    fn zero_complexity_net_is_the_lattice() {
        let d = f2(1);
        let net = build_net(&d, 2, 0.5, 0, DEFAULT_BUDGET).unwrap();
        assert_eq!(net.len(), 13);
        for e in net.elements() {
            assert!(e.function.values().windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn character_is_in_the_net() {
        let d = f2(1);
        let net = build_net(&d, 2, 0.5, 1, DEFAULT_BUDGET).unwrap();
        let chi = DenseFn::from_real(&d, &[1.0, -1.0]).unwrap();
        let i = net.position(&chi).expect("(-1)^x in net");
        let (j, dist) = nearest_in_net(&chi, &net, DEFAULT_BUDGET).unwrap();
        assert_eq!(dist, 0.0);
        assert_eq!(net.elements()[j].function, net.elements()[i].function);
    }

    #[test]
    fn net_size_and_elements() {
        let d = f2(1);
        let net = build_net(&d, 2, 0.4, 1, DEFAULT_BUDGET).unwrap();
        // all functions {0,1} -> lattice
        assert_eq!(net.len(), 21 * 21);
        let bound = net_size_bound(2, 1, 1, 2, 0.4, 1).unwrap();
        assert!((net.len() as f64).ln() <= bound.ln);
        for e in net.elements() {
            assert!(e.function.sup_norm() <= 1.0 + 1e-12);
            let f = PolyFactor::new(&d, e.factor.iter().map(|&i| net.polys()[i].clone()).collect()).unwrap();
            assert!(f.is_measurable(&e.function, 0.0));
        }
        for e in net.elements().iter().take(20) {
            let (_, dist) = nearest_in_net(&e.function, &net, DEFAULT_BUDGET).unwrap();
            assert_eq!(dist, 0.0);
        }
    }

    #[test]
    fn zero_projects_to_the_origin() {
        let d = f2(1);
        let net = build_net(&d, 2, 0.4, 1, DEFAULT_BUDGET).unwrap();
        let (i, dist) = nearest_in_net(&DenseFn::constant(&d, Complex64::new(0.0, 0.0)), &net, DEFAULT_BUDGET).unwrap();
        assert!(dist <= 0.4);
        assert_eq!(net.elements()[i].function.sup_norm(), 0.0);
    }

    #[test]
    fn covering_and_chain() {
        let d = f2(1);
        let net = build_net(&d, 2, 0.4, 1, DEFAULT_BUDGET).unwrap();
        let empty = cover_check(&net, 0, 1, DEFAULT_BUDGET).unwrap();
        assert!(empty.passed && empty.max_distance == 0.0);
        let report = cover_check(&net, 40, 9, DEFAULT_BUDGET).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.chain_failures, 0);

        let oracle = InverseGowersOracle::new(&d, 2, DEFAULT_BUDGET).unwrap();
        for p in net.polys() {
            let t = chain_trial(&phase(p), &net, &oracle, DEFAULT_BUDGET).unwrap();
            assert!(t.projection_distance <= 1.2 + COVER_TOL);
            assert!(t.holds);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let d = f2(2);
        assert!(matches!(build_net(&d, 3, 0.4, 2, DEFAULT_BUDGET), Err(Error::BudgetExceeded { .. })));
    }
}
