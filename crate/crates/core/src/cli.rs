//! Command-line experiment runner.
//!
//! Every subcommand writes one JSON report (keys sorted) and exits with 0 when
//! all asserted properties hold, 1 when one fails and 2 on configuration or
//! budget errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Map, Value};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::codes::{
    certify_lcc, corrupt, gowers_separation, hadamard_blr, lcc_distance_audit, ltc_hybrid_experiment, reed_muller,
    BlrTester, CodeSpec,
};
use crate::codes::ltc::boolean_word;
use crate::domain_fn::{DenseFn, Domain, Word};
use crate::error::{Error, Result};
use crate::factors::{decompose, DecompositionStatus};
use crate::field::Field;
use crate::gowers::{
    box_check, gowers_norm_exact, gowers_norm_mc, random_linear_system, von_neumann_check, ProductFn,
};
use crate::ncpoly::{coefficient_count_bound, degree_certify, enumerate_ncpolys, phase, term_keys};
use crate::nets::{build_net, cover_check, disk_lattice, net_size_bound, net_work};
use crate::util::{check_budget, derive_seed, pow_sat, rng_from_seed};

pub const SCHEMA_VERSION: &str = "1";

pub const COMMANDS: [&str; 11] = [
    "gowers-norm",
    "von-neumann",
    "ncpoly-enum",
    "decompose",
    "net-build",
    "net-cover",
    "rm-lcc-sim",
    "blr-ltc-sim",
    "gowers-separation",
    "distance-audit",
    "hybrid-ltc",
];

pub const EXIT_PASS: u8 = 0;
pub const EXIT_PROPERTY_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

const REPORT_KEYS: [&str; 8] = [
    "command",
    "generated_at",
    "inputs",
    "outputs",
    "passed",
    "properties",
    "schema_version",
    "seed",
];

const NORM_TOL: f64 = 1e-9;
const PYTHAGORAS_TOL: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(name = "gowers-lcc", version, about = "Gowers norms, polynomial factors and local codes on small finite fields")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact or sampled Gowers norm of one function.
    GowersNorm(RunArgs),
    /// Random linear systems and box averages against the U^k bound.
    VonNeumann(RunArgs),
    /// Enumerates non-classical polynomials of degree < r.
    NcpolyEnum(RunArgs),
    /// Energy-increment decomposition of one function.
    Decompose(RunArgs),
    /// Builds the ε-net, or only counts it.
    NetBuild {
        #[command(flatten)]
        run: RunArgs,
        /// Report the counting bound and construction work without building.
        #[arg(long)]
        counts_only: bool,
    },
    /// Projects random bounded functions onto the ε-net.
    NetCover(RunArgs),
    /// Reed-Muller local correction under random corruption.
    RmLccSim(RunArgs),
    /// BLR acceptance of a word against the Hadamard code.
    BlrLtcSim(RunArgs),
    /// Pairwise Gowers distances between codewords.
    GowersSeparation(RunArgs),
    /// Minimum distance of a certified Reed-Muller corrector.
    DistanceAudit(RunArgs),
    /// Random hybrids of two Hadamard codewords under the BLR test.
    HybridLtc(RunArgs),
    /// Checks a report file against the report schema.
    ValidateReport {
        path: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// TOML or JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write outputs and properties as `key,value` rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub params: Params,
}

/// Experiment parameters, shared by config files and flags.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Only meaningful in config files: must match the subcommand if present.
    #[arg(skip)]
    #[serde(default)]
    pub command: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub p: Option<u32>,
    #[arg(long)]
    #[serde(default)]
    pub t: Option<usize>,
    /// Monic modulus coefficients, constant term first, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub modulus_poly: Option<Vec<u32>>,
    #[arg(long)]
    #[serde(default)]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub r: Option<usize>,
    #[arg(long, alias = "eps")]
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub k: Option<usize>,
    /// Variables per linear form.
    #[arg(long)]
    #[serde(default)]
    pub vars: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub tau: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub rho_min: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(default)]
    pub trials: Option<usize>,
    /// Monte-Carlo sample count; switches gowers-norm to sampling.
    #[arg(long)]
    #[serde(default)]
    pub samples: Option<usize>,
    /// Maximum number of summed terms, e.g. `67108864` or `2^26`.
    #[arg(long, value_parser = parse_budget)]
    #[serde(default, deserialize_with = "de_budget")]
    pub budget: Option<u64>,
    /// Reed-Muller degree.
    #[arg(long)]
    #[serde(default)]
    pub degree: Option<usize>,
    /// one | random | random-real | bent for functions; codeword | bent | random | corrupt for BLR words.
    #[arg(long)]
    #[serde(default)]
    pub function: Option<String>,
    /// hadamard | reed-muller
    #[arg(long)]
    #[serde(default)]
    pub code: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub f_index: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub g_index: Option<usize>,
    /// A function in the library's JSON form (`field`, `n`, `values`).
    #[arg(long)]
    #[serde(default)]
    pub input: Option<PathBuf>,
}

pub fn parse_budget(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    if let Some((base, exp)) = s.split_once('^') {
        let base: u64 = base.trim().parse().map_err(|e| format!("bad budget base: {e}"))?;
        let exp: u32 = exp.trim().parse().map_err(|e| format!("bad budget exponent: {e}"))?;
        base.checked_pow(exp).ok_or_else(|| "budget overflows 64 bits".to_string())
    } else {
        s.replace('_', "").parse().map_err(|e| format!("bad budget: {e}"))
    }
}

fn de_budget<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }
    match Option::<Repr>::deserialize(d)? {
        None => Ok(None),
        Some(Repr::Int(v)) => Ok(Some(v)),
        Some(Repr::Text(s)) => parse_budget(&s).map(Some).map_err(serde::de::Error::custom),
    }
}

impl Params {
    /// `other`'s values win wherever they are set.
    pub fn overridden_by(self, other: Params) -> Params {
        macro_rules! pick {
            ($($f:ident),*) => { Params { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            command, p, t, modulus_poly, n, r, epsilon, k, vars, delta, tau, rho_min, seed, trials, samples,
            budget, degree, function, code, f_index, g_index, input
        )
    }
}

pub fn load_config(path: &Path) -> Result<Params> {
    let text = fs::read_to_string(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GowersNorm(_) => "gowers-norm",
            Command::VonNeumann(_) => "von-neumann",
            Command::NcpolyEnum(_) => "ncpoly-enum",
            Command::Decompose(_) => "decompose",
            Command::NetBuild { .. } => "net-build",
            Command::NetCover(_) => "net-cover",
            Command::RmLccSim(_) => "rm-lcc-sim",
            Command::BlrLtcSim(_) => "blr-ltc-sim",
            Command::GowersSeparation(_) => "gowers-separation",
            Command::DistanceAudit(_) => "distance-audit",
            Command::HybridLtc(_) => "hybrid-ltc",
            Command::ValidateReport { .. } => "validate-report",
        }
    }

    fn run_args(&self) -> Option<&RunArgs> {
        match self {
            Command::GowersNorm(a)
            | Command::VonNeumann(a)
            | Command::NcpolyEnum(a)
            | Command::Decompose(a)
            | Command::NetCover(a)
            | Command::RmLccSim(a)
            | Command::BlrLtcSim(a)
            | Command::GowersSeparation(a)
            | Command::DistanceAudit(a)
            | Command::HybridLtc(a) => Some(a),
            Command::NetBuild { run, .. } => Some(run),
            Command::ValidateReport { .. } => None,
        }
    }
}

/// What a subcommand produced, before it is wrapped into a report.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub inputs: Value,
    pub seed: Option<u64>,
    pub outputs: Value,
    pub properties: BTreeMap<String, bool>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.properties.values().all(|&v| v)
    }
}

/// The full report; `generated_at` is the only field that varies between identical runs.
pub fn build_report(command: &str, outcome: &Outcome, generated_at: &str) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "inputs": outcome.inputs,
        "seed": outcome.seed,
        "outputs": outcome.outputs,
        "properties": outcome.properties,
        "passed": outcome.passed(),
        "generated_at": generated_at,
    })
}

pub fn render_report(report: &Value) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn now_rfc3339() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| "1970-01-01T00:00:00Z".into())
}

/// Runs one experiment. `counts_only` only affects `net-build`.
pub fn execute(command: &str, params: Params, counts_only: bool) -> Result<Outcome> {
    if let Some(c) = &params.command {
        if c != command {
            return Err(Error::Config(format!("config is for `{c}` but `{command}` was run")));
        }
    }
    let mut run = Runner {
        command,
        p: params,
        extra_inputs: Map::new(),
    };
    let (outputs, properties) = match command {
        "gowers-norm" => run.gowers_norm()?,
        "von-neumann" => run.von_neumann()?,
        "ncpoly-enum" => run.ncpoly_enum()?,
        "decompose" => run.decompose()?,
        "net-build" => {
            run.extra_inputs.insert("counts_only".into(), Value::Bool(counts_only));
            run.net_build(counts_only)?
        }
        "net-cover" => run.net_cover()?,
        "rm-lcc-sim" => run.rm_lcc(false)?,
        "distance-audit" => run.rm_lcc(true)?,
        "blr-ltc-sim" => run.blr_ltc()?,
        "gowers-separation" => run.gowers_separation()?,
        "hybrid-ltc" => run.hybrid_ltc()?,
        other => return Err(Error::Config(format!("unknown command `{other}`"))),
    };
    let mut inputs = match serde_json::to_value(&run.p)? {
        Value::Object(m) => m.into_iter().filter(|(k, v)| !v.is_null() && k != "command").collect::<Map<_, _>>(),
        _ => unreachable!("Params serializes to an object"),
    };
    inputs.extend(run.extra_inputs);
    Ok(Outcome {
        inputs: Value::Object(inputs),
        seed: run.p.seed,
        outputs,
        properties,
    })
}

type Props = BTreeMap<String, bool>;

struct Runner<'a> {
    command: &'a str,
    p: Params,
    extra_inputs: Map<String, Value>,
}

fn or_default<T: Clone>(slot: &mut Option<T>, default: T) -> T {
    slot.get_or_insert(default).clone()
}

/// Numbers beyond `u64` are rendered as decimal strings.
fn big(v: u128) -> Value {
    u64::try_from(v).map_or_else(|_| Value::String(v.to_string()), Value::from)
}

fn props<const N: usize>(entries: [(&str, bool); N]) -> Props {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn random_disk_point<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(rng.gen::<f64>().sqrt(), rng.gen::<f64>() * std::f64::consts::TAU)
}

impl Runner<'_> {
    fn require<T: Clone>(&self, v: &Option<T>, flag: &str) -> Result<T> {
        v.clone()
            .ok_or_else(|| Error::Config(format!("--{flag} is required for {}", self.command)))
    }

    fn seed(&self) -> Result<u64> {
        self.require(&self.p.seed, "seed")
    }

    fn budget(&self) -> Result<u128> {
        self.require(&self.p.budget, "budget").map(u128::from)
    }

    fn field(&mut self) -> Result<Field> {
        let p = or_default(&mut self.p.p, 2);
        match &self.p.modulus_poly {
            Some(m) => {
                let field = Field::new(p, m.clone())?;
                if let Some(t) = self.p.t {
                    if t != field.t() {
                        return Err(Error::Config(format!("t = {t} but the modulus has degree {}", field.t())));
                    }
                }
                self.p.t = Some(field.t());
                Ok(field)
            }
            None => Field::canonical(p, or_default(&mut self.p.t, 1)),
        }
    }

    fn domain(&mut self) -> Result<Domain> {
        let field = self.field()?;
        let n = self.require(&self.p.n, "n")?;
        Domain::new(Arc::new(field), n)
    }

    /// The function under study: `--input` if given, otherwise a named family.
    fn function(&mut self, default: &str) -> Result<DenseFn> {
        if let Some(path) = self.p.input.clone() {
            if self.p.function.is_some() {
                return Err(Error::Config("give either --input or --function, not both".into()));
            }
            let text = fs::read_to_string(&path)?;
            let f: DenseFn = serde_json::from_str(&text)?;
            let d = f.domain();
            let spec = d.field().spec();
            let clash = self.p.p.is_some_and(|p| p != spec.p)
                || self.p.t.is_some_and(|t| t != d.field().t())
                || self.p.n.is_some_and(|n| n != d.n());
            if clash {
                return Err(Error::Config(format!("{} does not live on the configured domain", path.display())));
            }
            self.p.p = Some(spec.p);
            self.p.t = Some(d.field().t());
            self.p.n = Some(d.n());
            return Ok(f);
        }
        let d = self.domain()?;
        let kind = or_default(&mut self.p.function, default.to_string());
        match kind.as_str() {
            "one" => Ok(DenseFn::constant(&d, Complex64::new(1.0, 0.0))),
            "random" => Ok(DenseFn::random_bounded(&d, &mut rng_from_seed(self.seed()?))),
            "random-real" => Ok(DenseFn::random_real_bounded(&d, &mut rng_from_seed(self.seed()?))),
            "bent" => bent_phase(&d),
            other => Err(Error::Config(format!("unknown function `{other}`"))),
        }
    }

    fn gowers_norm(&mut self) -> Result<(Value, Props)> {
        let f = self.function("one")?;
        let r = self.require(&self.p.r, "r")?;
        if let Some(samples) = self.p.samples {
            let est = gowers_norm_mc(&f, r, samples, self.seed()?)?;
            return Ok((serde_json::to_value(est)?, Props::new()));
        }
        let budget = self.budget()?;
        let chain = (1..=r)
            .map(|j| gowers_norm_exact(&f, j, budget))
            .collect::<Result<Vec<f64>>>()?;
        let norm = chain[r - 1];
        let sup = f.sup_norm();
        let monotone = chain.windows(2).all(|w| w[0] <= w[1] + NORM_TOL) && norm <= sup + NORM_TOL;
        Ok((
            json!({ "norm": norm, "chain": chain, "sup_norm": sup }),
            props([("monotone_chain", monotone)]),
        ))
    }

    fn von_neumann(&mut self) -> Result<(Value, Props)> {
        let d = self.domain()?;
        let k = or_default(&mut self.p.k, 2);
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let vars = or_default(&mut self.p.vars, k + 1);
        let trials = or_default(&mut self.p.trials, 100);
        let (seed, budget) = (self.seed()?, self.budget()?);
        let field = d.field();

        let mut violations = 0usize;
        let mut max_slack = f64::NEG_INFINITY;
        for i in 0..trials {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            let system = random_linear_system(field, k + 1, vars, &mut rng)?;
            let fs: Vec<DenseFn> = (0..=k).map(|_| DenseFn::random_bounded(&d, &mut rng)).collect();
            let res = von_neumann_check(&system, &fs, budget)?;
            violations += usize::from(!res.holds);
            max_slack = max_slack.max(res.lhs - res.bound);
        }

        let size = d.size();
        let cells = pow_sat(size as u128, k as u64);
        check_budget(cells.saturating_mul(k as u128), budget)?;
        let box_seed = derive_seed(seed, u64::MAX);
        let mut box_violations = 0usize;
        let mut box_max_slack = f64::NEG_INFINITY;
        for i in 0..trials {
            let mut rng = rng_from_seed(derive_seed(box_seed, i as u64));
            let f = DenseFn::random_bounded(&d, &mut rng);
            let gs = (0..k)
                .map(|skip| {
                    let table: Vec<Complex64> = (0..cells).map(|_| random_disk_point(&mut rng)).collect();
                    ProductFn::from_fn(&d, k, move |xs| {
                        let idx = xs
                            .iter()
                            .enumerate()
                            .rev()
                            .fold(0, |acc, (j, &x)| acc * size + if j == skip { 0 } else { x });
                        table[idx]
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let res = box_check(&f, &gs, budget)?;
            box_violations += usize::from(!res.holds);
            box_max_slack = box_max_slack.max(res.lhs - res.bound);
        }
        Ok((
            json!({
                "systems": trials,
                "violations": violations,
                "max_slack": finite_or_null(max_slack),
                "box_cases": trials,
                "box_violations": box_violations,
                "box_max_slack": finite_or_null(box_max_slack),
            }),
            props([("von_neumann", violations == 0), ("box", box_violations == 0)]),
        ))
    }

    fn ncpoly_enum(&mut self) -> Result<(Value, Props)> {
        let d = self.domain()?;
        let r = self.require(&self.p.r, "r")?;
        if r == 0 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        let budget = self.budget()?;
        let polys = enumerate_ncpolys(&d, r as u32, budget)?;
        let checks = polys
            .par_iter()
            .map(|poly| {
                let norm = gowers_norm_exact(&phase(poly), r, budget)?;
                Ok(((norm - 1.0).abs(), degree_certify(poly, r as u32, budget)?))
            })
            .collect::<Result<Vec<(f64, bool)>>>()?;
        let max_dev = checks.iter().map(|c| c.0).fold(0.0, f64::max);
        let mut depths: BTreeMap<String, usize> = BTreeMap::new();
        for poly in &polys {
            let key = poly.max_depth().map_or("none".to_string(), |k| k.to_string());
            *depths.entry(key).or_default() += 1;
        }
        let field = d.field();
        Ok((
            json!({
                "count": polys.len(),
                "term_keys": term_keys(field, d.n(), r as u32 - 1).len(),
                "coefficient_count_bound": big(coefficient_count_bound(field.p(), field.t(), d.n(), r as u32)),
                "max_depth_counts": depths,
                "max_norm_deviation": max_dev,
            }),
            props([
                ("unit_phase_norm", max_dev <= NORM_TOL),
                ("degree_certified", checks.iter().all(|c| c.1)),
            ]),
        ))
    }

    fn decompose(&mut self) -> Result<(Value, Props)> {
        let f = self.function("random")?;
        let r = or_default(&mut self.p.r, 2);
        let eps = self.require(&self.p.epsilon, "epsilon")?;
        let rho = self.require(&self.p.rho_min, "rho-min")?;
        let budget = self.budget()?;
        if rho.is_nan() || rho <= 0.0 {
            return Err(Error::Config("rho-min must be positive".into()));
        }
        let max_iter = (1.0 / (rho * rho)).ceil() as usize;
        match decompose(&f, r, eps, rho, budget) {
            Ok(res) => {
                let converged = res.status == DecompositionStatus::Converged && res.residual_norm <= eps + NORM_TOL;
                let pythagoras = res.pythagoras_gaps.iter().all(|&g| g <= PYTHAGORAS_TOL);
                Ok((
                    json!({
                        "status": res.status,
                        "iterations": res.iterations,
                        "max_iterations": max_iter,
                        "residual_norm": res.residual_norm,
                        "correlation_trace": res.correlation_trace,
                        "energy_trace": res.energy_trace,
                        "pythagoras_gaps": res.pythagoras_gaps,
                        "complexity": res.factor.complexity(),
                        "cells": res.factor.num_cells(),
                        "factor": res.factor,
                    }),
                    props([
                        ("converged", converged),
                        ("energy_increments", true),
                        ("pythagoras", pythagoras),
                        ("iterations_bounded", res.iterations <= max_iter),
                    ]),
                ))
            }
            Err(e @ Error::EnergyIncrement { .. }) => Ok((
                json!({ "error": e.to_string(), "max_iterations": max_iter }),
                props([("energy_increments", false)]),
            )),
            Err(e) => Err(e),
        }
    }

    fn net_params(&mut self) -> Result<(Domain, u32, f64, u32, u128)> {
        let d = self.domain()?;
        let r = self.require(&self.p.r, "r")? as u32;
        let eps = self.require(&self.p.epsilon, "epsilon")?;
        let k = or_default(&mut self.p.k, 1) as u32;
        Ok((d, r, eps, k, self.budget()?))
    }

    fn net_build(&mut self, counts_only: bool) -> Result<(Value, Props)> {
        let (d, r, eps, k, budget) = self.net_params()?;
        let field = d.field();
        let bound = net_size_bound(field.p(), field.t(), d.n(), r, eps, k)?;
        let work = net_work(&d, r, eps, k, budget)?;
        let mut out = json!({
            "bound": bound,
            "work": big(work),
            "lattice_points": disk_lattice(eps).len(),
        });
        if counts_only {
            return Ok((out, Props::new()));
        }
        let net = build_net(&d, r, eps, k, budget)?;
        let within = match &bound.exact {
            Some(b) => BigUint::from(net.len()) <= *b,
            None => (net.len() as f64).ln() <= bound.ln + 1e-12,
        };
        out["net_size"] = Value::from(net.len());
        out["polynomials"] = Value::from(net.polys().len());
        Ok((out, props([("size_within_bound", within)])))
    }

    fn net_cover(&mut self) -> Result<(Value, Props)> {
        let (d, r, eps, k, budget) = self.net_params()?;
        let trials = or_default(&mut self.p.trials, 200);
        let seed = self.seed()?;
        let net = build_net(&d, r, eps, k, budget)?;
        let report = cover_check(&net, trials, seed, budget)?;
        let mut out = serde_json::to_value(&report)?;
        out["net_size"] = Value::from(net.len());
        Ok((
            out,
            props([("covered", report.passed), ("chain", report.chain_failures == 0)]),
        ))
    }

    fn rm_code(&mut self) -> Result<CodeSpec> {
        let d = self.domain()?;
        let kind = or_default(&mut self.p.code, "reed-muller".to_string());
        if kind != "reed-muller" {
            return Err(Error::Config(format!("{} needs a reed-muller code, got `{kind}`", self.command)));
        }
        let degree = self.require(&self.p.degree, "degree")?;
        reed_muller(&d, degree, self.budget()?)
    }

    fn rm_lcc(&mut self, audit: bool) -> Result<(Value, Props)> {
        let mut code = self.rm_code()?;
        let delta = self.require(&self.p.delta, "delta")?;
        let tau = self.require(&self.p.tau, "tau")?;
        let trials = or_default(&mut self.p.trials, 10_000);
        let seed = self.seed()?;
        let cert = certify_lcc(&mut code, delta, tau, trials as u64, seed)?;
        let mut out = json!({
            "codewords": code.len(),
            "certification": cert,
        });
        let mut ps = props([("certified", cert.certified)]);
        if audit && cert.certified {
            let a = lcc_distance_audit(&code, self.budget()?)?;
            ps.insert("distance_at_least_two_delta".into(), a.passes);
            out["audit"] = serde_json::to_value(a)?;
        }
        Ok((out, ps))
    }

    fn blr_ltc(&mut self) -> Result<(Value, Props)> {
        self.p.p.get_or_insert(2);
        self.p.t.get_or_insert(1);
        let n = self.require(&self.p.n, "n")?;
        let code = hadamard_blr(n)?;
        let d = code.domain().clone();
        let tester = BlrTester::new(&d)?;
        let trials = or_default(&mut self.p.trials, 1000);
        let (seed, budget) = (self.seed()?, self.budget()?);
        let pairs = pow_sat(d.size() as u128, 2);
        check_budget(pairs.saturating_mul(code.len() as u128 + 1), budget)?;

        let kind = or_default(&mut self.p.function, "codeword".to_string());
        let mut rng = rng_from_seed(seed);
        let word = match kind.as_str() {
            "codeword" | "corrupt" => {
                let i = or_default(&mut self.p.f_index, 0);
                let w = code
                    .codewords()
                    .get(i)
                    .ok_or_else(|| Error::Config(format!("codeword index {i} out of range")))?
                    .clone();
                if kind == "corrupt" {
                    corrupt(&w, self.require(&self.p.delta, "delta")?, &mut rng)
                } else {
                    w
                }
            }
            "bent" => boolean_word(&d, |x| {
                x.chunks_exact(2).filter(|c| c[0].0 == 1 && c[1].0 == 1).count() % 2 == 1
            }),
            "random" => Word::new(d.clone(), 2, d.points().map(|_| rng.gen_range(1..=2)).collect())?,
            other => return Err(Error::Config(format!("unknown BLR word `{other}`"))),
        };
        let acceptance = tester.exact_acceptance(&word);
        let sampled = tester.sampled_acceptance(&word, trials, derive_seed(seed, 1));
        let distance = code.distance_to_code(&word)?;
        let codeword_min = code
            .codewords()
            .iter()
            .map(|w| tester.exact_acceptance(w))
            .fold(1.0, f64::min);
        Ok((
            json!({
                "codewords": code.len(),
                "word": word,
                "exact_acceptance": acceptance,
                "sampled_acceptance": sampled,
                "distance": distance,
                "min_codeword_acceptance": codeword_min,
            }),
            props([
                ("codewords_accepted", codeword_min == 1.0),
                ("rejection_at_least_distance", 1.0 - acceptance >= distance - 1e-12),
            ]),
        ))
    }

    fn gowers_separation(&mut self) -> Result<(Value, Props)> {
        let kind = or_default(&mut self.p.code, "hadamard".to_string());
        let code = match kind.as_str() {
            "hadamard" => {
                self.p.p.get_or_insert(2);
                self.p.t.get_or_insert(1);
                hadamard_blr(self.require(&self.p.n, "n")?)?
            }
            "reed-muller" => self.rm_code()?,
            other => return Err(Error::Config(format!("unknown code `{other}`"))),
        };
        let r = or_default(&mut self.p.r, 2);
        let report = gowers_separation(&code, r, self.budget()?)?;
        let min = report.min;
        let mut out = serde_json::to_value(report)?;
        out["codewords"] = Value::from(code.len());
        Ok((out, props([("separated", min > 0.0)])))
    }

    fn hybrid_ltc(&mut self) -> Result<(Value, Props)> {
        let kind = or_default(&mut self.p.code, "hadamard".to_string());
        if kind != "hadamard" {
            return Err(Error::Config(format!("hybrid-ltc needs the hadamard code, got `{kind}`")));
        }
        self.p.p.get_or_insert(2);
        self.p.t.get_or_insert(1);
        let code = hadamard_blr(self.require(&self.p.n, "n")?)?;
        let f_index = or_default(&mut self.p.f_index, 0);
        let g_index = or_default(&mut self.p.g_index, 1);
        let trials = or_default(&mut self.p.trials, 200);
        let (seed, budget) = (self.seed()?, self.budget()?);
        let report = ltc_hybrid_experiment(&code, f_index, g_index, trials, seed, budget)?;
        let tester = BlrTester::new(code.domain())?;
        let ends_accepted = [f_index, g_index]
            .iter()
            .all(|&i| tester.exact_acceptance(&code.codewords()[i]) == 1.0);
        // each averaged simplex coordinate is a mean of fair coin flips or a constant
        let hat_tol = 5.0 * 0.5 / (trials.max(1) as f64).sqrt();
        Ok((
            serde_json::to_value(&report)?,
            props([
                ("codewords_accepted", ends_accepted),
                ("hybrid_mean", report.hat_mean_error <= hat_tol),
            ]),
        ))
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else {
        Value::Null
    }
}

/// `e(Tr(x_1 x_2 + x_3 x_4 + …)/p)`.
fn bent_phase(d: &Domain) -> Result<DenseFn> {
    if d.n() < 2 {
        return Err(Error::Config("bent needs n ≥ 2".into()));
    }
    let field = d.field();
    let p = field.p() as f64;
    Ok(DenseFn::from_fn(d, |x| {
        let c = d.coords(x);
        let s = c
            .chunks_exact(2)
            .fold(crate::field::FieldElem::ZERO, |acc, pair| field.add(acc, field.mul(pair[0], pair[1])));
        Complex64::from_polar(1.0, std::f64::consts::TAU * field.abs_trace(s) as f64 / p)
    }))
}

/// Schema violations of a parsed report; empty means valid.
pub fn validate_report(report: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    let Some(obj) = report.as_object() else {
        return vec!["report is not a JSON object".into()];
    };
    for key in obj.keys() {
        if !REPORT_KEYS.contains(&key.as_str()) {
            errs.push(format!("unexpected field `{key}`"));
        }
    }
    for key in REPORT_KEYS {
        if !obj.contains_key(key) {
            errs.push(format!("missing required field `{key}`"));
        }
    }
    match obj.get("schema_version") {
        Some(Value::String(v)) if v == SCHEMA_VERSION => {}
        Some(other) => errs.push(format!(
            "schema_version mismatch: expected \"{SCHEMA_VERSION}\", found {other}"
        )),
        None => {}
    }
    match obj.get("command") {
        Some(Value::String(c)) if COMMANDS.contains(&c.as_str()) => {}
        Some(other) => errs.push(format!("`command` must name a subcommand, found {other}")),
        None => {}
    }
    match obj.get("seed") {
        Some(Value::Null) => {}
        Some(Value::Number(n)) if n.is_u64() => {}
        Some(other) => errs.push(format!("`seed` must be an unsigned integer or null, found {other}")),
        None => {}
    }
    for key in ["inputs", "outputs"] {
        if let Some(v) = obj.get(key) {
            if !v.is_object() {
                errs.push(format!("`{key}` must be an object"));
            }
        }
    }
    let mut all_hold = None;
    match obj.get("properties") {
        Some(Value::Object(m)) => {
            if m.values().all(Value::is_boolean) {
                all_hold = Some(m.values().all(|v| v == &Value::Bool(true)));
            } else {
                errs.push("every entry of `properties` must be a boolean".into());
            }
        }
        Some(_) => errs.push("`properties` must be an object".into()),
        None => {}
    }
    match obj.get("passed") {
        Some(Value::Bool(b)) => {
            if all_hold.is_some_and(|h| h != *b) {
                errs.push("`passed` disagrees with `properties`".into());
            }
        }
        Some(_) => errs.push("`passed` must be a boolean".into()),
        None => {}
    }
    match obj.get("generated_at") {
        Some(Value::String(s)) => {
            if OffsetDateTime::parse(s, &Rfc3339).is_err() {
                errs.push(format!("`generated_at` is not an RFC 3339 timestamp: {s}"));
            }
        }
        Some(_) => errs.push("`generated_at` must be a string".into()),
        None => {}
    }
    errs
}

pub fn validate_report_file(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    match serde_json::from_str::<Value>(&text) {
        Ok(v) => Ok(validate_report(&v)),
        Err(e) => Ok(vec![format!("not valid JSON: {e}")]),
    }
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&join(k), v, rows)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| flatten(&join(&i.to_string()), v, rows)),
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

/// `key,value` rows for the outputs and properties of a report.
pub fn write_csv(report: &Value, path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    flatten("outputs", &report["outputs"], &mut rows);
    flatten("properties", &report["properties"], &mut rows);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("csv: {e}")))?;
    w.write_record(["key", "value"]).map_err(|e| Error::Config(format!("csv: {e}")))?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses arguments, runs, writes the report and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_CONFIG;
        }
        // fails only if a pool already exists, in which case it is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    if let Command::ValidateReport { path } = &cli.command {
        return match validate_report_file(path) {
            Ok(errs) if errs.is_empty() => {
                println!("valid");
                EXIT_PASS
            }
            Ok(errs) => {
                for e in errs {
                    eprintln!("invalid: {e}");
                }
                EXIT_PROPERTY_FAILURE
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        };
    }
    let name = cli.command.name();
    let args = cli.command.run_args().expect("experiment commands carry run arguments");
    let counts_only = matches!(cli.command, Command::NetBuild { counts_only: true, .. });
    let outcome = args
        .config
        .as_deref()
        .map(load_config)
        .transpose()
        .and_then(|file| {
            let params = file.unwrap_or_default().overridden_by(args.params.clone());
            execute(name, params, counts_only)
        });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let report = build_report(name, &outcome, &now_rfc3339());
    let text = render_report(&report);
    let written = match &args.output {
        Some(path) => fs::write(path, &text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
    .and_then(|()| args.csv.as_deref().map_or(Ok(()), |p| write_csv(&report, p)));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if outcome.passed() {
        eprintln!("{name}: passed");
        EXIT_PASS
    } else {
        let failed: Vec<&str> = outcome
            .properties
            .iter()
            .filter(|(_, &v)| !v)
            .map(|(k, _)| k.as_str())
            .collect();
        eprintln!("{name}: failed ({})", failed.join(", "));
        EXIT_PROPERTY_FAILURE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(f: impl FnOnce(&mut Params)) -> Params {
        let mut p = Params::default();
        f(&mut p);
        p
    }

    #[test]
    fn budget_forms() {
        assert_eq!(parse_budget("2^26"), Ok(1 << 26));
        assert_eq!(parse_budget("1_000"), Ok(1000));
        assert!(parse_budget("2^99").is_err());
        let p: Params = toml::from_str("budget = \"2^10\"\nn = 2").unwrap();
        assert_eq!(p.budget, Some(1024));
        let p: Params = serde_json::from_str(r#"{"budget": 4096}"#).unwrap();
        assert_eq!(p.budget, Some(4096));
    }

    #[test]
    fn flags_override_file() {
        let file = params(|p| {
            p.n = Some(2);
            p.r = Some(3);
        });
        let flags = params(|p| p.r = Some(2));
        let merged = file.overridden_by(flags);
        assert_eq!((merged.n, merged.r), (Some(2), Some(2)));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<Params>("colour = 3").is_err());
    }

    #[test]
    fn constant_one_has_unit_norm() {
        let out = execute(
            "gowers-norm",
            params(|p| {
                p.n = Some(2);
                p.r = Some(3);
                p.budget = Some(1 << 20);
            }),
            false,
        )
        .unwrap();
        assert!((out.outputs["norm"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(out.passed());
        assert_eq!(out.seed, None);
    }

    #[test]
    fn missing_seed_and_budget_are_config_errors() {
        let no_budget = execute("gowers-norm", params(|p| {
            p.n = Some(2);
            p.r = Some(2);
        }), false);
        assert!(matches!(no_budget, Err(Error::Config(_))));
        let no_seed = execute("von-neumann", params(|p| {
            p.n = Some(2);
            p.budget = Some(1 << 20);
        }), false);
        assert!(matches!(no_seed, Err(Error::Config(_))));
        let tight = execute("gowers-norm", params(|p| {
            p.n = Some(3);
            p.r = Some(3);
            p.budget = Some(10);
        }), false);
        assert!(matches!(tight, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn reports_validate() {
        let out = execute("gowers-norm", params(|p| {
            p.n = Some(1);
            p.r = Some(2);
            p.budget = Some(1 << 10);
        }), false)
        .unwrap();
        let report = build_report("gowers-norm", &out, &now_rfc3339());
        assert!(validate_report(&report).is_empty(), "{:?}", validate_report(&report));

        let mut bad = report.clone();
        bad.as_object_mut().unwrap().remove("seed");
        assert!(validate_report(&bad).iter().any(|e| e.contains("seed")));

        let mut bad = report.clone();
        bad["schema_version"] = json!("2");
        assert!(validate_report(&bad).iter().any(|e| e.contains("schema_version mismatch")));

        let mut bad = report;
        bad["passed"] = json!(false);
        assert!(!validate_report(&bad).is_empty());
    }

    #[test]
    fn flatten_paths() {
        let mut rows = Vec::new();
        flatten("outputs", &json!({"a": [1, {"b": "x"}], "c": true}), &mut rows);
        assert_eq!(
            rows,
            vec![
                ("outputs.a.0".to_string(), "1".to_string()),
                ("outputs.a.1.b".to_string(), "x".to_string()),
                ("outputs.c".to_string(), "true".to_string()),
            ]
        );
    }
}
