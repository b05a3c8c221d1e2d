//! Gowers uniformity norms, exact and sampled, and empirical checks of the
//! generalized von Neumann inequality and its box-norm lemma.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain_fn::{Domain, DenseFn};
use crate::error::{Error, Result};
use crate::field::{Field, FieldElem};
use crate::util::{check_budget, derive_seed, pairwise_sum, par_sum, pow_sat, rng_from_seed};

/// Tolerance for comparisons that follow exact-in-principle double summation.
pub const EXACT_TOL: f64 = 1e-9;

/// Samples drawn per seeded block in [`gowers_norm_mc`].
const MC_BLOCK: usize = 4096;

/// `(Δ_h f)(x) = f(x+h) · conj(f(x))`.
pub fn mult_diff(f: &DenseFn, h: usize) -> Result<DenseFn> {
    let d = f.domain();
    if h >= d.size() {
        return Err(Error::DimensionMismatch(format!("shift {h} outside K^{}", d.n())));
    }
    Ok(DenseFn::from_fn(d, |x| f.at(d.add(x, h)) * f.at(x).conj()))
}

fn diff_into(d: &Domain, src: &[Complex64], h: usize, dst: &mut [Complex64]) {
    for (x, out) in dst.iter_mut().enumerate() {
        *out = src[d.add(x, h)] * src[x].conj();
    }
}

// E_{h_1..h_depth} |E_x Δ_{h_1..h_depth} g(x)|^2, with one scratch buffer per level.
fn box_power(d: &Domain, g: &[Complex64], depth: usize, scratch: &mut [Vec<Complex64>]) -> f64 {
    if depth == 0 {
        let mean = pairwise_sum(g) / g.len() as f64;
        return mean.norm_sqr();
    }
    let (buf, rest) = scratch.split_first_mut().unwrap();
    let mut total = 0.0;
    for h in d.points() {
        diff_into(d, g, h, buf);
        total += box_power(d, buf, depth - 1, rest);
    }
    total / d.size() as f64
}

/// The `2^r`-th power of `‖f‖_{U^r}`, by exact summation.
///
/// Uses `E_{x,h_1..h_r} Δ_{h_1}…Δ_{h_r} f(x) = E_{h_1..h_{r-1}} |E_x Δ_{h_1}…Δ_{h_{r-1}} f(x)|²`,
/// so the work is `q^{nr}` table passes; the budget is charged for the
/// `q^{n(r+1)}` terms of the defining average.
pub fn gowers_power_exact(f: &DenseFn, r: usize, budget: u128) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidArgument("Gowers order must be at least 1".into()));
    }
    let d = f.domain();
    check_budget(pow_sat(d.size() as u128, (r + 1) as u64), budget)?;
    let size = d.size();
    let values = f.values();
    let power = if r == 1 {
        box_power(d, values, 0, &mut [])
    } else {
        let partial: f64 = par_sum(size, |h| {
            let mut first = vec![Complex64::default(); size];
            diff_into(d, values, h, &mut first);
            let mut scratch = vec![vec![Complex64::default(); size]; r - 2];
            box_power(d, &first, r - 2, &mut scratch)
        });
        partial / size as f64
    };
    if power < -EXACT_TOL || !power.is_finite() {
        return Err(Error::NotNonnegative { re: power, im: 0.0 });
    }
    Ok(power.max(0.0))
}

/// `‖f‖_{U^r}` by exact summation. Refuses rather than samples when
/// `q^{n(r+1)}` exceeds `budget`.
pub fn gowers_norm_exact(f: &DenseFn, r: usize, budget: u128) -> Result<f64> {
    let power = gowers_power_exact(f, r, budget)?;
    Ok(power.powf(1.0 / (1u64 << r) as f64))
}

/// Monte-Carlo estimate of a Gowers norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Root of the clamped power estimate.
    pub estimate: f64,
    /// Standard error of the power estimate.
    pub stderr: f64,
    /// Unclamped mean of the sampled `2^r`-fold products.
    pub power: f64,
}

/// Unbiased estimate of `‖f‖_{U^r}^{2^r}` from `samples` draws of `(x, h_1..h_r)`.
///
/// Samples are split into fixed blocks, each with its own generator seeded
/// from `(seed, block)`, so the result does not depend on the thread count.
pub fn gowers_norm_mc(f: &DenseFn, r: usize, samples: usize, seed: u64) -> Result<McEstimate> {
    if r == 0 {
        return Err(Error::InvalidArgument("Gowers order must be at least 1".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let d = f.domain();
    let size = d.size();
    let blocks = samples.div_ceil(MC_BLOCK);
    let partials: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, b as u64));
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut hs = vec![0usize; r];
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..count {
                let x = rng.gen_range(0..size);
                for h in hs.iter_mut() {
                    *h = rng.gen_range(0..size);
                }
                let mut prod = Complex64::new(1.0, 0.0);
                for omega in 0u32..(1 << r) {
                    let mut point = x;
                    for (j, &h) in hs.iter().enumerate() {
                        if omega >> j & 1 == 1 {
                            point = d.add(point, h);
                        }
                    }
                    let v = f.at(point);
                    // Δ_h conjugates the unshifted factor, so the conjugation
                    // parity is that of the number of zero bits.
                    if (r as u32 - omega.count_ones()) % 2 == 1 {
                        prod *= v.conj();
                    } else {
                        prod *= v;
                    }
                }
                sum += prod.re;
                sum_sq += prod.re * prod.re;
            }
            (sum, sum_sq)
        })
        .collect();
    let sum: f64 = partials.iter().map(|p| p.0).sum();
    let sum_sq: f64 = partials.iter().map(|p| p.1).sum();
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        estimate: mean.max(0.0).powf(1.0 / (1u64 << r) as f64),
        stderr: (var / n).sqrt(),
        power: mean,
    })
}

/// A linear form `(w_1, …, w_m)`, acting as `(z_1..z_m) ↦ Σ w_j z_j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinearForm {
    pub weights: Vec<FieldElem>,
}

impl LinearForm {
    pub fn new(weights: Vec<FieldElem>) -> Self {
        LinearForm { weights }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.is_zero())
    }

    /// True if `self = c · other` for some `c ∈ K`.
    pub fn is_multiple_of(&self, other: &LinearForm, field: &Field) -> bool {
        field.elements().any(|c| {
            self.weights
                .iter()
                .zip(&other.weights)
                .all(|(&a, &b)| a == field.mul(c, b))
        })
    }
}

/// `k + 1` pairwise non-proportional linear forms in `m` variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinearSystem {
    forms: Vec<LinearForm>,
    vars: usize,
}

impl LinearSystem {
    pub fn new(field: &Field, forms: Vec<LinearForm>) -> Result<Self> {
        if forms.len() < 2 {
            return Err(Error::InvalidSystem("need at least two forms".into()));
        }
        let vars = forms[0].weights.len();
        if vars == 0 {
            return Err(Error::InvalidSystem("forms need at least one variable".into()));
        }
        for (i, form) in forms.iter().enumerate() {
            if form.weights.len() != vars {
                return Err(Error::InvalidSystem(format!("form {i} has the wrong arity")));
            }
            if form.weights.iter().any(|&w| !field.contains(w)) {
                return Err(Error::InvalidSystem(format!("form {i} has a weight outside the field")));
            }
            if form.is_zero() {
                return Err(Error::ZeroForm(i));
            }
        }
        for i in 0..forms.len() {
            for j in i + 1..forms.len() {
                if forms[i].is_multiple_of(&forms[j], field) || forms[j].is_multiple_of(&forms[i], field) {
                    return Err(Error::ProportionalForms(i, j));
                }
            }
        }
        Ok(LinearSystem { forms, vars })
    }

    pub fn forms(&self) -> &[LinearForm] {
        &self.forms
    }

    /// Number of variables `m`.
    pub fn vars(&self) -> usize {
        self.vars
    }

    /// The Gowers order `k` controlling the system (one less than the form count).
    pub fn order(&self) -> usize {
        self.forms.len() - 1
    }
}

/// Draws `forms` random pairwise non-proportional nonzero forms in `vars`
/// variables by rejection.
pub fn random_linear_system<R: Rng + ?Sized>(field: &Field, forms: usize, vars: usize, rng: &mut R) -> Result<LinearSystem> {
    let q = field.q() as u128;
    // number of lines through the origin in K^vars
    let lines = (pow_sat(q, vars as u64) - 1) / (q - 1);
    if forms < 2 || vars == 0 || (forms as u128) > lines {
        return Err(Error::InvalidSystem(format!(
            "no system of {forms} non-proportional forms in {vars} variables"
        )));
    }
    let mut chosen: Vec<LinearForm> = Vec::with_capacity(forms);
    while chosen.len() < forms {
        let form = LinearForm::new((0..vars).map(|_| FieldElem(rng.gen_range(0..field.q()))).collect());
        if form.is_zero() || chosen.iter().any(|c| form.is_multiple_of(c, field)) {
            continue;
        }
        chosen.push(form);
    }
    LinearSystem::new(field, chosen)
}

/// Outcome of an inequality check `lhs ≤ bound + 1e-9`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

impl CheckResult {
    fn new(lhs: f64, bound: f64) -> Self {
        CheckResult {
            lhs,
            bound,
            holds: lhs <= bound + EXACT_TOL,
        }
    }
}

/// Computes `|E_z Π_i f_i(L_i(z))|` exactly and compares it with `min_i ‖f_i‖_{U^k}`.
pub fn von_neumann_check(system: &LinearSystem, functions: &[DenseFn], budget: u128) -> Result<CheckResult> {
    if functions.len() != system.forms.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} forms but {} functions",
            system.forms.len(),
            functions.len()
        )));
    }
    let d = functions[0].domain().clone();
    for f in functions {
        if f.domain() != &d {
            return Err(Error::DimensionMismatch("functions on different domains".into()));
        }
    }
    let size = d.size();
    let m = system.vars;
    let total = pow_sat(size as u128, m as u64);
    check_budget(total, budget)?;
    let k = system.order();

    let scale_tables: Vec<Vec<Vec<usize>>> = system
        .forms
        .iter()
        .map(|form| form.weights.iter().map(|&w| d.scale_table(w)).collect())
        .collect();
    let sum = par_sum(total as usize, |idx| {
        let mut rest = idx;
        let z: Vec<usize> = (0..m)
            .map(|_| {
                let v = rest % size;
                rest /= size;
                v
            })
            .collect();
        let mut prod = Complex64::new(1.0, 0.0);
        for (f, tables) in functions.iter().zip(&scale_tables) {
            let point = z
                .iter()
                .zip(tables)
                .fold(0, |acc, (&zj, table)| d.add(acc, table[zj]));
            prod *= f.at(point);
        }
        prod
    });
    let lhs = (sum / total as f64).norm();
    let mut bound = f64::INFINITY;
    for f in functions {
        bound = bound.min(gowers_norm_exact(f, k, budget)?);
    }
    Ok(CheckResult::new(lhs, bound))
}

/// A complex function on `(K^n)^k`, indexed `Σ_j x_j · (q^n)^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductFn {
    domain: Domain,
    k: usize,
    values: Vec<Complex64>,
}

impl ProductFn {
    pub fn from_fn(domain: &Domain, k: usize, f: impl Fn(&[usize]) -> Complex64) -> Result<Self> {
        let size = domain.size();
        let total = size
            .checked_pow(k as u32)
            .ok_or_else(|| Error::InvalidArgument("product domain too large".into()))?;
        let mut xs = vec![0usize; k];
        let values = (0..total)
            .map(|idx| {
                let mut rest = idx;
                for x in xs.iter_mut() {
                    *x = rest % size;
                    rest /= size;
                }
                f(&xs)
            })
            .collect();
        Ok(ProductFn {
            domain: domain.clone(),
            k,
            values,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// True if the value never changes when coordinate `i` does.
    pub fn independent_of(&self, i: usize) -> bool {
        let size = self.domain.size();
        let stride = size.pow(i as u32);
        (0..self.values.len()).all(|idx| {
            let xi = (idx / stride) % size;
            self.values[idx] == self.values[idx - xi * stride]
        })
    }
}

/// Compares `|E_{x_1..x_k} f(x_1+…+x_k) Π_i g_i(x)|` with `‖f‖_{U^k}` where
/// each `g_i` must not depend on `x_i`.
pub fn box_check(f: &DenseFn, g_list: &[ProductFn], budget: u128) -> Result<CheckResult> {
    let k = g_list.len();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one g_i".into()));
    }
    let d = f.domain();
    for (i, g) in g_list.iter().enumerate() {
        if g.k != k || g.domain() != d {
            return Err(Error::DimensionMismatch(format!("g_{} has the wrong shape", i + 1)));
        }
        if !g.independent_of(i) {
            return Err(Error::DependsOnCoordinate { index: i + 1 });
        }
    }
    let size = d.size();
    let total = pow_sat(size as u128, k as u64);
    check_budget(total, budget)?;
    let sum = par_sum(total as usize, |idx| {
        let mut rest = idx;
        let mut point = 0;
        for _ in 0..k {
            point = d.add(point, rest % size);
            rest /= size;
        }
        g_list.iter().fold(f.at(point), |acc, g| acc * g.values[idx])
    });
    let lhs = (sum / total as f64).norm();
    let bound = gowers_norm_exact(f, k, budget)?;
    Ok(CheckResult::new(lhs, bound))
}
