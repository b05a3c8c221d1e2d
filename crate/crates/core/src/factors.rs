//! Polynomial factors, conditional expectations and the energy-increment
//! decomposition driven by an exhaustive inverse-Gowers oracle.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::domain_fn::{inner_product, DenseFn, Domain};
use crate::error::{Error, Result};
use crate::gowers::gowers_norm_exact;
use crate::ncpoly::{enumerate_ncpolys, phase, NCPoly, TorusValue};
use crate::util::par_argmin;

/// Slack allowed on the per-step energy increment.
pub const ENERGY_TOL: f64 = 1e-9;

/// An ordered list of polynomials and the partition of `K^n` into level sets.
#[derive(Clone, Debug)]
pub struct PolyFactor {
    domain: Domain,
    polys: Vec<NCPoly>,
    labels: Vec<Vec<TorusValue>>,
    cell_of: Vec<usize>,
    cell_sizes: Vec<usize>,
}

impl PolyFactor {
    /// The trivial factor with a single cell.
    pub fn empty(domain: &Domain) -> Self {
        PolyFactor::new(domain, Vec::new()).unwrap()
    }

    pub fn new(domain: &Domain, polys: Vec<NCPoly>) -> Result<Self> {
        if polys.iter().any(|p| p.domain() != domain) {
            return Err(Error::DimensionMismatch("polynomial on a different domain".into()));
        }
        let tables: Vec<_> = polys.iter().map(|p| p.eval_table()).collect();
        let labels: Vec<Vec<TorusValue>> = domain
            .points()
            .map(|x| tables.iter().map(|t| t.get(x)).collect())
            .collect();
        let mut ids: HashMap<&[TorusValue], usize> = HashMap::new();
        let mut cell_of = Vec::with_capacity(domain.size());
        let mut cell_sizes = Vec::new();
        for label in &labels {
            let next = ids.len();
            let id = *ids.entry(label.as_slice()).or_insert(next);
            if id == cell_sizes.len() {
                cell_sizes.push(0);
            }
            cell_sizes[id] += 1;
            cell_of.push(id);
        }
        Ok(PolyFactor {
            domain: domain.clone(),
            polys,
            labels,
            cell_of,
            cell_sizes,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn polys(&self) -> &[NCPoly] {
        &self.polys
    }

    /// `|B|`, the number of polynomials.
    pub fn complexity(&self) -> usize {
        self.polys.len()
    }

    /// `(P_1(x), …, P_k(x))`.
    pub fn label(&self, x: usize) -> &[TorusValue] {
        &self.labels[x]
    }

    /// Cell index of `x`; cells are numbered by first appearance in point order.
    pub fn cell(&self, x: usize) -> usize {
        self.cell_of[x]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cell_of
    }

    pub fn num_cells(&self) -> usize {
        self.cell_sizes.len()
    }

    /// True if `f` is constant on every cell.
    pub fn is_measurable(&self, f: &DenseFn, tol: f64) -> bool {
        let mut reps: Vec<Option<Complex64>> = vec![None; self.num_cells()];
        self.domain.points().all(|x| {
            let c = self.cell_of[x];
            match reps[c] {
                None => {
                    reps[c] = Some(f.at(x));
                    true
                }
                Some(v) => (v - f.at(x)).norm() <= tol,
            }
        })
    }
}

impl Serialize for PolyFactor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.polys.serialize(s)
    }
}

/// `E[f|B]`: the average of `f` over the cell containing each point.
pub fn cond_expect(f: &DenseFn, b: &PolyFactor) -> Result<DenseFn> {
    if f.domain() != b.domain() {
        return Err(Error::DimensionMismatch("function and factor domains differ".into()));
    }
    let mut sums = vec![Complex64::new(0.0, 0.0); b.num_cells()];
    for (x, v) in f.values().iter().enumerate() {
        sums[b.cell_of[x]] += v;
    }
    let means: Vec<Complex64> = sums
        .iter()
        .zip(&b.cell_sizes)
        .map(|(s, &n)| s / n as f64)
        .collect();
    Ok(DenseFn::from_fn(f.domain(), |x| means[b.cell_of[x]]))
}

/// `B` extended by one polynomial.
pub fn refine(b: &PolyFactor, p: NCPoly) -> Result<PolyFactor> {
    let mut polys = b.polys.clone();
    polys.push(p);
    PolyFactor::new(&b.domain, polys)
}

/// Every cell of `fine` lies inside a cell of `coarse`.
pub fn is_refinement(fine: &PolyFactor, coarse: &PolyFactor) -> bool {
    if fine.domain != coarse.domain {
        return false;
    }
    let mut parent: Vec<Option<usize>> = vec![None; fine.num_cells()];
    fine.domain.points().all(|x| {
        let (c, up) = (fine.cell_of[x], coarse.cell_of[x]);
        match parent[c] {
            None => {
                parent[c] = Some(up);
                true
            }
            Some(prev) => prev == up,
        }
    })
}

/// `∥g∥₂² = E|g|²`.
pub fn energy(g: &DenseFn) -> f64 {
    inner_product(g, g).map(|z| z.re).unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PythagorasCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Compares `∥E[f|B']∥²` with `∥E[f|B]∥² + ∥E[f|B'] − E[f|B]∥²` for `B' ⪯ B`.
pub fn pythagoras_check(f: &DenseFn, coarse: &PolyFactor, fine: &PolyFactor) -> Result<PythagorasCheck> {
    if !is_refinement(fine, coarse) {
        return Err(Error::NotRefinement);
    }
    let ef = cond_expect(f, fine)?;
    let ec = cond_expect(f, coarse)?;
    let lhs = energy(&ef);
    let rhs = energy(&ec) + energy(&ef.sub(&ec)?);
    Ok(PythagorasCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// Exhaustive stand-in for the inverse theorem: every degree-`<r` polynomial
/// with zero constant term, with its phase precomputed.
pub struct InverseGowersOracle {
    r: usize,
    polys: Vec<NCPoly>,
    phases: Vec<DenseFn>,
}

#[derive(Clone, Debug)]
pub struct OracleHit {
    pub poly: NCPoly,
    pub index: usize,
    pub correlation: f64,
}

impl InverseGowersOracle {
    pub fn new(domain: &Domain, r: usize, budget: u128) -> Result<Self> {
        let polys = enumerate_ncpolys(domain, r as u32, budget)?;
        let phases = polys.iter().map(phase).collect();
        Ok(InverseGowersOracle { r, polys, phases })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    /// The polynomial maximizing `|⟨g, e(P)⟩|`, lowest enumeration index on ties.
    pub fn best(&self, g: &DenseFn) -> Result<OracleHit> {
        if let Some(ph) = self.phases.first() {
            if ph.domain() != g.domain() {
                return Err(Error::DimensionMismatch("oracle built for another domain".into()));
            }
        }
        let (index, neg) = par_argmin(self.phases.len(), |i| -inner_product(g, &self.phases[i]).unwrap().norm())
            .ok_or(Error::EmptyNet)?;
        Ok(OracleHit {
            poly: self.polys[index].clone(),
            index,
            correlation: -neg,
        })
    }
}

/// One-shot oracle query; enumerates afresh.
pub fn inverse_gowers_oracle(g: &DenseFn, r: usize, budget: u128) -> Result<OracleHit> {
    InverseGowersOracle::new(g.domain(), r, budget)?.best(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecompositionStatus {
    Converged,
    OracleExhausted,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionResult {
    pub status: DecompositionStatus,
    pub factor: PolyFactor,
    pub approximant: DenseFn,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Best oracle correlation `ρ_i` at each call, including a final rejected one.
    pub correlation_trace: Vec<f64>,
    /// `∥E[f|B_i]∥₂²` for `i = 0..=iterations`.
    pub energy_trace: Vec<f64>,
    pub pythagoras_gaps: Vec<f64>,
}

/// Energy-increment decomposition `f = E[f|B] + (f − E[f|B])` with
/// `∥f − E[f|B]∥_{U^r} ≤ ε` on convergence.
pub fn decompose(f: &DenseFn, r: usize, eps: f64, rho_min: f64, budget: u128) -> Result<DecompositionResult> {
    let oracle = InverseGowersOracle::new(f.domain(), r, budget)?;
    decompose_with(f, &oracle, eps, rho_min, budget)
}

pub fn decompose_with(
    f: &DenseFn,
    oracle: &InverseGowersOracle,
    eps: f64,
    rho_min: f64,
    budget: u128,
) -> Result<DecompositionResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange(format!("ε = {eps} must lie in (0, 1)")));
    }
    if !(rho_min > 0.0 && rho_min <= 1.0) {
        return Err(Error::OutOfRange(format!("ρ_min = {rho_min} must lie in (0, 1]")));
    }
    if !f.is_bounded() {
        return Err(Error::OutOfRange("f is not bounded by 1".into()));
    }
    let r = oracle.r();
    let max_iterations = (1.0 / (rho_min * rho_min)).ceil() as usize;
    let mut factor = PolyFactor::empty(f.domain());
    let mut approx = cond_expect(f, &factor)?;
    let mut residual = gowers_norm_exact(&f.sub(&approx)?, r, budget)?;
    let mut status = DecompositionStatus::Converged;
    let mut correlation_trace = Vec::new();
    let mut energy_trace = vec![energy(&approx)];
    let mut pythagoras_gaps = Vec::new();
    let mut iterations = 0;

    while residual > eps {
        let g = f.sub(&approx)?;
        let hit = oracle.best(&g)?;
        correlation_trace.push(hit.correlation);
        if hit.correlation < rho_min || iterations >= max_iterations {
            status = DecompositionStatus::OracleExhausted;
            break;
        }
        let refined = refine(&factor, hit.poly)?;
        pythagoras_gaps.push(pythagoras_check(f, &factor, &refined)?.gap);
        let next = cond_expect(f, &refined)?;
        let increment = energy(&next) - energy_trace[iterations];
        let required = hit.correlation * hit.correlation;
        if increment < required - ENERGY_TOL {
            return Err(Error::EnergyIncrement {
                step: iterations + 1,
                increment,
                required,
            });
        }
        factor = refined;
        approx = next;
        energy_trace.push(energy(&approx));
        iterations += 1;
        residual = gowers_norm_exact(&f.sub(&approx)?, r, budget)?;
    }

    Ok(DecompositionResult {
        status,
        factor,
        approximant: approx,
        residual_norm: residual,
        iterations,
        correlation_trace,
        energy_trace,
        pythagoras_gaps,
    })
}
