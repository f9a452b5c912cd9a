//! Trials, parameter sweeps, the graph community demo and CSV output.
//!
//! Every random choice in a trial is keyed by the trial seed, and trial
//! seeds are derived from the master seed by trial index, so a sweep is a
//! pure function of its configuration. Adding trials leaves earlier ones
//! unchanged, and every sweep value reuses the same trial seeds.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{
    apply, graph_diffusion_operator, heat_kernel_matrix, sbm_sample, DiffusionError,
};
use crate::emd::{normalized_emd_line, EmdError, Grid, SourceVector};
use crate::io::{sig12, IoError};
use crate::privacy::{
    gaussian_sigma, privatize, sensitivity_general, sensitivity_line, LineNeighbours,
    NoiseMultiplier, PrivacyError, PrivacyParams,
};
use crate::recovery::{
    bpd_solve, feasibility_radius, least_residual, RecoveryError, RecoveryProblem,
    RecoveryResult, SolverTolerances,
};
use crate::rng::{derive_seed, keyed_rng, Domain};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no connected sample after {0} attempts")]
    DisconnectedAfterRetries(usize),
    #[error("no records")]
    Empty,
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Emd(#[from] EmdError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(IoError::Io(e))
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(IoError::Csv(e))
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::InvalidConfig(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SigmaMode {
    Fixed(f64),
    Private {
        epsilon: f64,
        delta: f64,
        alpha: f64,
        multiplier: NoiseMultiplier,
    },
}

impl SigmaMode {
    pub fn label(&self) -> String {
        match self {
            SigmaMode::Fixed(_) => "fixed".into(),
            SigmaMode::Private { multiplier, .. } => format!("private-{}", multiplier.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Placement {
    /// Single source at the grid point nearest 1/2.
    Center,
    /// `k` distinct grid points drawn uniformly.
    Uniform,
    /// Unit sources at the grid points nearest the given positions.
    Fixed(Vec<f64>),
}

/// What a trial does when no source vector fits inside the ball.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfeasiblePolicy {
    /// Re-solve with the radius set to [`RELAX_FACTOR`] times the smallest
    /// achievable residual; the record is flagged `relaxed`.
    #[default]
    Relax,
    /// Record the trial as degenerate with EMD error 1.
    Degenerate,
}

pub const RELAX_FACTOR: f64 = 1.01;

impl FromStr for InfeasiblePolicy {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "relax" => Ok(Self::Relax),
            "degenerate" => Ok(Self::Degenerate),
            other => Err(invalid(format!("unknown infeasible policy {other:?}"))),
        }
    }
}

struct Solved {
    result: Option<RecoveryResult>,
    radius: f64,
    relaxed: bool,
}

fn solve_with_policy(
    problem: &RecoveryProblem,
    tol: &SolverTolerances,
    policy: InfeasiblePolicy,
) -> Result<Solved, HarnessError> {
    let settle = |r: Result<RecoveryResult, RecoveryError>| match r {
        Ok(r) => Ok(Some(r)),
        Err(RecoveryError::MaxIterations(best)) => Ok(Some(*best)),
        Err(RecoveryError::Infeasible { .. }) => Ok(None),
        Err(e) => Err(HarnessError::from(e)),
    };
    let first = settle(bpd_solve(problem, tol))?;
    if first.is_some() || policy == InfeasiblePolicy::Degenerate {
        return Ok(Solved {
            result: first,
            radius: problem.radius(),
            relaxed: false,
        });
    }
    let (rho, _) = least_residual(problem, tol)?;
    let radius = RELAX_FACTOR * rho;
    let relaxed = RecoveryProblem::from_matrix(
        problem.matrix().clone(),
        problem.measurements().as_slice(),
        radius,
        problem.grid().clone(),
    )?;
    Ok(Solved {
        result: settle(bpd_solve(&relaxed, tol))?,
        radius,
        relaxed: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    N,
    M,
    /// Measurement time `t`.
    LowerT,
    /// Effective time `T = μt`; sets `t = T/μ`.
    BigT,
    Sigma,
    Epsilon,
    Delta,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::N => "n",
            SweepVar::M => "m",
            SweepVar::LowerT => "t",
            SweepVar::BigT => "T",
            SweepVar::Sigma => "sigma",
            SweepVar::Epsilon => "epsilon",
            SweepVar::Delta => "delta",
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "n" => SweepVar::N,
            "m" => SweepVar::M,
            "t" => SweepVar::LowerT,
            "T" => SweepVar::BigT,
            "sigma" => SweepVar::Sigma,
            "epsilon" => SweepVar::Epsilon,
            "delta" => SweepVar::Delta,
            other => return Err(invalid(format!("unknown sweep variable {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub mu: f64,
    pub t: f64,
    pub sigma_mode: SigmaMode,
    pub k: usize,
    pub placement: Placement,
    pub trials: usize,
    pub sweep: Option<Sweep>,
    /// Feasibility slack: radius is `(1 + ρ)σ√m`.
    pub rho: f64,
    pub seed: u64,
    /// Normal-approximation CI multiplier.
    pub ci_factor: f64,
    pub tolerances: SolverTolerances,
    pub infeasible: InfeasiblePolicy,
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 100,
            m: 50,
            mu: 0.5,
            t: 1.0,
            sigma_mode: SigmaMode::Fixed(0.1),
            k: 1,
            placement: Placement::Center,
            trials: 10,
            sweep: None,
            rho: 0.0,
            seed: 0,
            ci_factor: 1.96,
            tolerances: SolverTolerances::default(),
            infeasible: InfeasiblePolicy::Relax,
            record_wall_time: false,
        }
    }
}

pub const PRESETS: [&str; 6] = ["default", "sigma", "m", "t", "n", "private-T"];

impl ExperimentConfig {
    pub fn big_t(&self) -> f64 {
        self.mu * self.t
    }

    /// Named configurations for the standard figures.
    pub fn preset(name: &str) -> Result<Self, HarnessError> {
        let base = Self::default();
        let sweep = |var, values: &[f64]| {
            Some(Sweep {
                var,
                values: values.to_vec(),
            })
        };
        Ok(match name {
            "default" => base,
            "sigma" => Self {
                sweep: sweep(SweepVar::Sigma, &[0.05, 0.1, 0.2, 0.4]),
                ..base
            },
            "m" => Self {
                sweep: sweep(SweepVar::M, &[10.0, 20.0, 50.0, 100.0, 200.0]),
                ..base
            },
            "t" => Self {
                sigma_mode: SigmaMode::Fixed(0.2),
                sweep: sweep(SweepVar::BigT, &[0.01, 0.05, 0.1, 0.2, 0.5]),
                ..base
            },
            "n" => Self {
                t: 0.1,
                sigma_mode: SigmaMode::Fixed(0.2),
                sweep: sweep(SweepVar::N, &[50.0, 100.0, 200.0, 400.0]),
                ..base
            },
            "private-T" => Self {
                k: 2,
                placement: Placement::Fixed(vec![0.1, 0.9]),
                sigma_mode: SigmaMode::Private {
                    epsilon: 0.5,
                    delta: 0.1,
                    alpha: 1.0,
                    multiplier: NoiseMultiplier::Printed,
                },
                sweep: sweep(SweepVar::BigT, &[0.01, 0.05, 0.5, 2.0, 5.0]),
                ..base
            },
            other => return Err(invalid(format!("unknown preset {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n == 0 || self.m == 0 {
            return Err(invalid("n and m must be positive"));
        }
        if !(self.mu > 0.0 && self.t > 0.0) {
            return Err(invalid("mu and t must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.rho >= 0.0) {
            return Err(invalid("rho must be nonnegative"));
        }
        if self.k == 0 || self.k > self.n {
            return Err(invalid(format!("k must be in 1..={}", self.n)));
        }
        match &self.placement {
            Placement::Center if self.k != 1 => {
                return Err(invalid("center placement needs k = 1"))
            }
            Placement::Fixed(p) if p.len() != self.k => {
                return Err(invalid("k must equal the number of fixed sources"))
            }
            _ => {}
        }
        match self.sigma_mode {
            SigmaMode::Fixed(s) if !(s >= 0.0 && s.is_finite()) => {
                Err(invalid("sigma must be finite and nonnegative"))
            }
            SigmaMode::Private {
                epsilon,
                delta,
                alpha,
                ..
            } => PrivacyParams::new(epsilon, delta, alpha)
                .map(|_| ())
                .map_err(HarnessError::from),
            _ => Ok(()),
        }
    }

    /// Copy of this config with the sweep variable set to `value`.
    pub fn with_value(&self, var: SweepVar, value: f64) -> Result<Self, HarnessError> {
        let mut c = self.clone();
        let count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(invalid(format!("{var} must be a positive integer, got {v}")))
            }
        };
        match (var, &mut c.sigma_mode) {
            (SweepVar::N, _) => c.n = count(value)?,
            (SweepVar::M, _) => c.m = count(value)?,
            (SweepVar::LowerT, _) => c.t = value,
            (SweepVar::BigT, _) => c.t = value / c.mu,
            (SweepVar::Sigma, SigmaMode::Fixed(s)) => *s = value,
            (SweepVar::Epsilon, SigmaMode::Private { epsilon, .. }) => *epsilon = value,
            (SweepVar::Delta, SigmaMode::Private { delta, .. }) => *delta = value,
            _ => return Err(invalid(format!("cannot sweep {var} in this sigma mode"))),
        }
        Ok(c)
    }

    /// Parses flat `key = value` text. Blank lines and `#` comments are
    /// skipped; a `preset` key, if present, is applied before the others.
    ///
    /// Keys: `preset n m mu t T k trials seed rho ci_factor mode sigma
    /// epsilon delta alpha multiplier placement sources sweep values
    /// infeasible wall_time max_iterations`.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut pairs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key = value", no + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut c = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, name)) => Self::preset(name)?,
            None => Self::default(),
        };
        let get = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
            v.parse().map_err(|_| invalid(format!("{key}: cannot parse {v:?}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<f64>, HarnessError> {
            v.split([',', ';', ' '])
                .filter(|s| !s.is_empty())
                .map(|s| num(key, s))
                .collect()
        }
        for (key, v) in &pairs {
            match key.as_str() {
                "preset" | "mode" | "sigma" | "epsilon" | "delta" | "alpha" | "multiplier"
                | "sweep" | "values" | "T" | "sources" => {}
                "n" => c.n = num(key, v)?,
                "m" => c.m = num(key, v)?,
                "mu" => c.mu = num(key, v)?,
                "t" => c.t = num(key, v)?,
                "k" => c.k = num(key, v)?,
                "trials" => c.trials = num(key, v)?,
                "seed" => c.seed = num(key, v)?,
                "rho" => c.rho = num(key, v)?,
                "ci_factor" => c.ci_factor = num(key, v)?,
                "wall_time" => c.record_wall_time = num(key, v)?,
                "infeasible" => c.infeasible = v.parse()?,
                "max_iterations" => c.tolerances.max_iterations = num(key, v)?,
                "placement" => {
                    c.placement = match v.as_str() {
                        "center" => Placement::Center,
                        "uniform" => Placement::Uniform,
                        "fixed" => Placement::Fixed(Vec::new()),
                        other => return Err(invalid(format!("unknown placement {other:?}"))),
                    }
                }
                other => return Err(invalid(format!("unknown key {other:?}"))),
            }
        }
        if let Some(v) = get("T") {
            c.t = num::<f64>("T", v)? / c.mu;
        }
        if let Some(v) = get("sources") {
            let p = list("sources", v)?;
            c.k = p.len();
            c.placement = Placement::Fixed(p);
        }
        let private = match get("mode") {
            Some("private") => true,
            Some("fixed") => false,
            Some(other) => return Err(invalid(format!("unknown mode {other:?}"))),
            None => matches!(c.sigma_mode, SigmaMode::Private { .. }),
        };
        c.sigma_mode = if private {
            let (e0, d0, a0, m0) = match c.sigma_mode {
                SigmaMode::Private {
                    epsilon,
                    delta,
                    alpha,
                    multiplier,
                } => (epsilon, delta, alpha, multiplier),
                SigmaMode::Fixed(_) => (4.0, 0.1, 1.0, NoiseMultiplier::Printed),
            };
            SigmaMode::Private {
                epsilon: get("epsilon").map(|v| num("epsilon", v)).transpose()?.unwrap_or(e0),
                delta: get("delta").map(|v| num("delta", v)).transpose()?.unwrap_or(d0),
                alpha: get("alpha").map(|v| num("alpha", v)).transpose()?.unwrap_or(a0),
                multiplier: get("multiplier")
                    .map(|v| v.parse().map_err(HarnessError::from))
                    .transpose()?
                    .unwrap_or(m0),
            }
        } else {
            let s0 = match c.sigma_mode {
                SigmaMode::Fixed(s) => s,
                SigmaMode::Private { .. } => 0.1,
            };
            SigmaMode::Fixed(get("sigma").map(|v| num("sigma", v)).transpose()?.unwrap_or(s0))
        };
        if let Some(var) = get("sweep") {
            let values = match get("values") {
                Some(v) => list("values", v)?,
                None => return Err(invalid("sweep needs values")),
            };
            c.sweep = Some(Sweep {
                var: var.parse()?,
                values,
            });
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub mu: f64,
    pub t: f64,
    pub big_t: f64,
    pub k: usize,
    pub sigma_mode: String,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub delta2: f64,
    pub sigma_used: f64,
    /// Radius imposed on the solve; differs from `(1 + ρ)σ√m` when relaxed.
    pub radius: f64,
    /// EMD between the unit-mass normalizations of truth and estimate.
    pub emd_error: f64,
    /// Raw `‖f₀ − f̂‖₂`.
    pub l2_error: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Empty estimate or an infeasible solve; `emd_error` is then 1.
    pub degenerate: bool,
    /// Whether the truth lies inside the nominal data-fidelity ball.
    pub truth_feasible: bool,
    /// The nominal ball missed the image of the box and was enlarged.
    pub relaxed: bool,
    pub wall_ms: Option<f64>,
}

/// A trial with the vectors it produced.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub truth: SourceVector,
    pub estimate: Option<RecoveryResult>,
    pub released: Vec<f64>,
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, Domain::TrialSeed, index as u64)
}

fn place_sources(c: &ExperimentConfig, grid: &Grid, seed: u64) -> Result<SourceVector, HarnessError> {
    let n = c.n;
    let mut w = vec![0.0; n];
    match &c.placement {
        Placement::Center => w[grid.nearest(0.5).expect("nonempty grid")] = 1.0,
        Placement::Uniform => {
            let mut rng = keyed_rng(seed, Domain::SourcePlacement, 0);
            for i in rand::seq::index::sample(&mut rng, n, c.k) {
                w[i] = 1.0;
            }
        }
        Placement::Fixed(positions) => {
            for &x in positions {
                let i = grid.nearest(x).expect("nonempty grid");
                if w[i] != 0.0 {
                    return Err(invalid(format!("two sources snap to grid point {i}")));
                }
                w[i] = 1.0;
            }
        }
    }
    Ok(SourceVector::new(w, grid.clone())?)
}

pub fn run_trial(c: &ExperimentConfig, seed: u64) -> Result<TrialRecord, HarnessError> {
    Ok(run_trial_detailed(c, seed, 0)?.record)
}

pub fn run_trial_detailed(
    c: &ExperimentConfig,
    seed: u64,
    trial: usize,
) -> Result<TrialOutcome, HarnessError> {
    c.validate()?;
    let start = Instant::now();
    let op = heat_kernel_matrix(c.n, c.m, c.mu, c.t)?;
    let grid = Grid::unit_interval(c.n);
    let truth = place_sources(c, &grid, seed)?;
    let y = apply(&op, truth.weights())?;

    let alpha = match c.sigma_mode {
        SigmaMode::Private { alpha, .. } => alpha,
        SigmaMode::Fixed(_) => 1.0,
    };
    let delta2 = sensitivity_line(&op, alpha, LineNeighbours::GridStep)?.delta2;
    let sigma = match c.sigma_mode {
        SigmaMode::Fixed(s) => s,
        SigmaMode::Private {
            epsilon,
            delta,
            alpha,
            multiplier,
        } => gaussian_sigma(&PrivacyParams::new(epsilon, delta, alpha)?, delta2, multiplier)?,
    };
    let release = privatize(y.as_slice(), sigma, derive_seed(seed, Domain::NoiseSeed, 0))?;
    let radius = feasibility_radius(sigma, c.m, c.rho);
    let problem = RecoveryProblem::new(&op, &release.values, radius)?;
    let truth_feasible = problem.residual_norm(truth.weights()) <= radius;

    let solved = solve_with_policy(&problem, &c.tolerances, c.infeasible)?;
    let estimate = solved.result;
    let (emd_error, l2_error, iterations, converged, degenerate) = match &estimate {
        Some(r) => {
            let l2 = l2_distance(truth.weights(), r.estimate.weights());
            if r.is_degenerate() {
                (1.0, l2, r.iterations, r.converged, true)
            } else {
                let e = normalized_emd_line(&truth, &r.estimate)?;
                (e, l2, r.iterations, r.converged, false)
            }
        }
        None => (1.0, l2_distance(truth.weights(), &vec![0.0; c.n]), 0, false, true),
    };
    let (epsilon, delta, alpha_rec) = match c.sigma_mode {
        SigmaMode::Private {
            epsilon,
            delta,
            alpha,
            ..
        } => (Some(epsilon), Some(delta), Some(alpha)),
        SigmaMode::Fixed(_) => (None, None, None),
    };
    let record = TrialRecord {
        sweep_var: "none".into(),
        sweep_value: 0.0,
        trial,
        seed,
        n: c.n,
        m: c.m,
        mu: c.mu,
        t: c.t,
        big_t: c.big_t(),
        k: c.k,
        sigma_mode: c.sigma_mode.label(),
        epsilon,
        delta,
        alpha: alpha_rec,
        delta2,
        sigma_used: sigma,
        radius: solved.radius,
        emd_error,
        l2_error,
        iterations,
        converged,
        degenerate,
        truth_feasible,
        relaxed: solved.relaxed,
        wall_ms: c
            .record_wall_time
            .then(|| start.elapsed().as_secs_f64() * 1e3),
    };
    Ok(TrialOutcome {
        record,
        truth,
        estimate,
        released: release.values,
    })
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub trials: usize,
    pub mean_emd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_delta2: f64,
    /// A single trial gives a zero-width interval.
    pub ci_degenerate: bool,
}

impl SummaryRow {
    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub sweep_var: SweepVar,
    pub ci_factor: f64,
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Mean and `mean ± factor · sd/√n` with the sample standard deviation.
pub fn mean_ci(values: &[f64], factor: f64) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, mean, mean);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let half = factor * var.sqrt() / n.sqrt();
    (mean, mean - half, mean + half)
}

pub fn summarize(records: &[TrialRecord], ci_factor: f64) -> Vec<SummaryRow> {
    let mut values: Vec<f64> = records.iter().map(|r| r.sweep_value).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
        .into_iter()
        .map(|v| {
            let group: Vec<&TrialRecord> = records.iter().filter(|r| r.sweep_value == v).collect();
            let emd: Vec<f64> = group.iter().map(|r| r.emd_error).collect();
            let (mean_emd, ci_lo, ci_hi) = mean_ci(&emd, ci_factor);
            SummaryRow {
                sweep_value: v,
                trials: group.len(),
                mean_emd,
                ci_lo,
                ci_hi,
                mean_delta2: group.iter().map(|r| r.delta2).sum::<f64>() / group.len() as f64,
                ci_degenerate: group.len() < 2,
            }
        })
        .collect()
}

pub fn run_sweep(c: &ExperimentConfig) -> Result<SweepTable, HarnessError> {
    c.validate()?;
    let sweep = c.sweep.as_ref().ok_or_else(|| invalid("no sweep variable"))?;
    if sweep.values.is_empty() {
        return Err(invalid("sweep has no values"));
    }
    let configs = sweep
        .values
        .iter()
        .map(|&v| c.with_value(sweep.var, v).map(|cv| (v, cv)))
        .collect::<Result<Vec<_>, _>>()?;
    for (_, cv) in &configs {
        cv.validate()?;
    }
    let jobs: Vec<(f64, &ExperimentConfig, usize)> = configs
        .iter()
        .flat_map(|(v, cv)| (0..c.trials).map(move |i| (*v, cv, i)))
        .collect();
    let mut records = jobs
        .par_iter()
        .map(|&(v, cv, i)| {
            let mut r = run_trial_detailed(cv, trial_seed(c.seed, i), i)?.record;
            r.sweep_var = sweep.var.name().into();
            r.sweep_value = v;
            Ok(r)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    sort_records(&mut records);
    let summary = summarize(&records, c.ci_factor);
    Ok(SweepTable {
        sweep_var: sweep.var,
        ci_factor: c.ci_factor,
        records,
        summary,
    })
}

pub fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(a.seed.cmp(&b.seed))
            .then(a.trial.cmp(&b.trial))
    });
}

pub const RECORD_HEADER: [&str; 23] = [
    "sweep_var", "sweep_value", "trial", "seed", "n", "m", "mu", "t", "T", "k", "sigma_mode",
    "epsilon", "delta", "alpha", "delta2", "sigma_used", "radius", "emd_error", "l2_error",
    "iterations", "converged", "degenerate", "wall_ms",
];

pub const SUMMARY_HEADER: [&str; 5] = ["sweep_value", "mean_emd", "ci_lo", "ci_hi", "mean_delta2"];

fn opt(v: Option<f64>) -> String {
    v.map(sig12).unwrap_or_default()
}

/// Records as CSV text, sorted by sweep value then seed.
pub fn records_csv(records: &[TrialRecord]) -> Result<String, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_HEADER)?;
    for r in &sorted {
        w.write_record([
            r.sweep_var.clone(),
            sig12(r.sweep_value),
            r.trial.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            sig12(r.mu),
            sig12(r.t),
            sig12(r.big_t),
            r.k.to_string(),
            r.sigma_mode.clone(),
            opt(r.epsilon),
            opt(r.delta),
            opt(r.alpha),
            sig12(r.delta2),
            sig12(r.sigma_used),
            sig12(r.radius),
            sig12(r.emd_error),
            sig12(r.l2_error),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.degenerate.to_string(),
            opt(r.wall_ms),
        ])?;
    }
    finish_csv(w)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            sig12(r.sweep_value),
            sig12(r.mean_emd),
            sig12(r.ci_lo),
            sig12(r.ci_hi),
            sig12(r.mean_delta2),
        ])?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, HarnessError> {
    let bytes = w.into_inner().map_err(|e| HarnessError::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_csv(records: &[TrialRecord], path: &Path) -> Result<(), HarnessError> {
    let text = records_csv(records)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn emit_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, summary_csv(rows)?)?;
    Ok(())
}

/// Least-squares fit `y ≈ a + b x`; returns `(a, b, residual sum of squares)`.
pub fn fit_affine(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rss = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    (a, b, rss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDemoConfig {
    pub n: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub multiplier: NoiseMultiplier,
    pub rho: f64,
    pub seed: u64,
    pub max_attempts: usize,
    pub tolerances: SolverTolerances,
    pub infeasible: InfeasiblePolicy,
}

impl Default for GraphDemoConfig {
    fn default() -> Self {
        Self {
            n: 100,
            communities: 2,
            p_in: 0.05,
            p_out: 0.001,
            tau: 2.0,
            epsilon: 4.0,
            delta: 0.1,
            alpha: 1.0,
            multiplier: NoiseMultiplier::Printed,
            rho: 0.0,
            seed: 0,
            max_attempts: 20,
            tolerances: SolverTolerances::default(),
            infeasible: InfeasiblePolicy::Relax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDemoReport {
    pub attempts: usize,
    pub edges: usize,
    pub algebraic_connectivity: f64,
    pub source: usize,
    pub true_community: usize,
    pub delta2: f64,
    pub sigma: f64,
    pub radius: f64,
    pub relaxed: bool,
    /// Recovered mass per community.
    pub community_mass: Vec<f64>,
    pub recovered_community: Option<usize>,
    /// More than half the recovered mass lies in the true community.
    pub correct: bool,
    pub degenerate: bool,
    /// Operator entries all within `1e-9` of each other.
    pub flat_diffusion: bool,
    pub converged: bool,
    pub iterations: usize,
}

pub fn graph_demo(c: &GraphDemoConfig) -> Result<GraphDemoReport, HarnessError> {
    if c.communities == 0 || c.communities > c.n {
        return Err(invalid("communities must be in 1..=n"));
    }
    let mut sample = None;
    for attempt in 0..c.max_attempts {
        let s = sbm_sample(
            c.n,
            c.communities,
            c.p_in,
            c.p_out,
            derive_seed(c.seed, Domain::GraphSample, attempt as u64),
        )?;
        if s.connected {
            sample = Some((attempt + 1, s));
            break;
        }
    }
    let (attempts, sample) = sample.ok_or(HarnessError::DisconnectedAfterRetries(c.max_attempts))?;
    let graph = &sample.graph;
    let source = keyed_rng(c.seed, Domain::SourcePlacement, 0).random_range(0..c.n);
    let op = graph_diffusion_operator(graph, c.tau)?;
    let mut f0 = vec![0.0; c.n];
    f0[source] = 1.0;
    let y = apply(&op, &f0)?;
    let delta2 = sensitivity_general(op.matrix(), &graph.edges(), c.alpha)?.delta2;
    let params = PrivacyParams::new(c.epsilon, c.delta, c.alpha)?;
    let sigma = gaussian_sigma(&params, delta2, c.multiplier)?;
    let release = privatize(y.as_slice(), sigma, derive_seed(c.seed, Domain::NoiseSeed, 0))?;
    let radius = feasibility_radius(sigma, c.n, c.rho);
    let problem = RecoveryProblem::new(&op, &release.values, radius)?;
    let solved = solve_with_policy(&problem, &c.tolerances, c.infeasible)?;
    let result = solved.result;
    let mut community_mass = vec![0.0; c.communities];
    if let Some(r) = &result {
        for (i, w) in r.estimate.weights().iter().enumerate() {
            community_mass[sample.membership[i]] += w;
        }
    }
    let total: f64 = community_mass.iter().sum();
    let degenerate = result.as_ref().is_none_or(|r| r.is_degenerate());
    let true_community = sample.membership[source];
    let recovered_community = (!degenerate).then(|| {
        community_mass
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("at least one community")
    });
    let a = op.matrix();
    let flat_diffusion = a.max() - a.min() < 1e-9;
    Ok(GraphDemoReport {
        attempts,
        edges: graph.edges().len(),
        algebraic_connectivity: graph.spectrum()?.algebraic_connectivity(),
        source,
        true_community,
        delta2,
        sigma,
        radius: solved.radius,
        relaxed: solved.relaxed,
        correct: !degenerate && community_mass[true_community] > 0.5 * total,
        community_mass,
        recovered_community,
        degenerate,
        flat_diffusion,
        converged: result.as_ref().is_some_and(|r| r.converged),
        iterations: result.as_ref().map_or(0, |r| r.iterations),
    })
}
