//! Box-constrained Basis Pursuit Denoising:
//!
//! ```text
//! minimize ‖f‖₁  subject to  ‖M f − ỹ‖₂ ≤ r,  f ∈ [0, 1]ⁿ
//! ```
//!
//! On the box `‖f‖₁ = Σ f_i`, so the program has a linear objective, a
//! single convex quadratic constraint and bound constraints. It is solved
//! with a log-barrier interior-point method:
//!
//! 1. **Feasibility.** Minimize `½‖Mf − ỹ‖²` over the box until a point
//!    strictly inside the ball is found. If the minimum residual exceeds
//!    `r` by more than half the feasibility tolerance the problem is
//!    reported [`RecoveryError::Infeasible`]. A zero radius is handled as a
//!    ball of radius `feasibility_tol / 2`.
//! 2. **Optimality.** Follow the central path of
//!    `t Σ f_i − Σ ln f_i − Σ ln(1 − f_i) − ln(r² − ‖Mf − ỹ‖²)`
//!    with damped Newton steps until the barrier duality gap `(2n + 1)/t`
//!    is below the optimality target.
//!
//! Newton systems have the form `(D + BᵀB) Δ = −g` with `D` diagonal and
//! `B` having `m` or `m + 1` rows; when that is fewer than `n` they are
//! solved through the Woodbury identity.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::DiffusionOperator;
use crate::emd::{EmdError, Grid, SourceVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("radius must be finite and nonnegative, got {0}")]
    InvalidRadius(f64),
    #[error("operator is {rows}x{cols} but {got} measurements were given")]
    DimensionMismatch { rows: usize, cols: usize, got: usize },
    /// `best_residual` is the residual at the point where infeasibility was
    /// certified; the true minimum lies between the radius and it.
    #[error("infeasible: residual {best_residual:e} certified above radius {radius:e}")]
    Infeasible { best_residual: f64, radius: f64 },
    #[error("no convergence within {} Newton steps", .0.iterations)]
    MaxIterations(Box<RecoveryResult>),
    #[error("Newton system could not be factored")]
    Numerical,
    #[error(transparent)]
    Emd(#[from] EmdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverTolerances {
    /// Allowed constraint violation is `feasibility_rel · (1 + r)`.
    pub feasibility_rel: f64,
    /// Relative optimality target for the objective.
    pub optimality_rel: f64,
    /// Cap on Newton steps across both phases.
    pub max_iterations: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            feasibility_rel: 1e-6,
            optimality_rel: 1e-6,
            max_iterations: 50_000,
        }
    }
}

impl SolverTolerances {
    pub fn feasibility_tol(&self, radius: f64) -> f64 {
        self.feasibility_rel * (1.0 + radius)
    }
}

/// `(1 + ρ) σ √m`; `ρ = 0` gives the radius `σ√m`.
pub fn feasibility_radius(sigma: f64, m: usize, rho: f64) -> f64 {
    (1.0 + rho) * sigma * (m as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryProblem {
    matrix: DMatrix<f64>,
    measurements: DVector<f64>,
    radius: f64,
    grid: Grid,
}

impl RecoveryProblem {
    pub fn new(
        operator: &DiffusionOperator,
        measurements: &[f64],
        radius: f64,
    ) -> Result<Self, RecoveryError> {
        let grid = match operator.kind() {
            crate::diffusion::OperatorKind::Interval { .. } => Grid::unit_interval(operator.sources()),
            crate::diffusion::OperatorKind::Graph { .. } => Grid::Nodes(operator.sources()),
        };
        Self::from_matrix(operator.matrix().clone(), measurements, radius, grid)
    }

    pub fn from_matrix(
        matrix: DMatrix<f64>,
        measurements: &[f64],
        radius: f64,
        grid: Grid,
    ) -> Result<Self, RecoveryError> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(RecoveryError::InvalidRadius(radius));
        }
        let (rows, cols) = matrix.shape();
        if measurements.len() != rows || grid.len() != cols {
            return Err(RecoveryError::DimensionMismatch {
                rows,
                cols,
                got: measurements.len(),
            });
        }
        Ok(Self {
            matrix,
            measurements: DVector::from_column_slice(measurements),
            radius,
            grid,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn measurements(&self) -> &DVector<f64> {
        &self.measurements
    }

    pub fn residual_norm(&self, f: &[f64]) -> f64 {
        (&self.matrix * DVector::from_column_slice(f) - &self.measurements).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub estimate: SourceVector,
    /// `‖f̂‖₁`.
    pub objective: f64,
    pub residual_norm: f64,
    /// `max(0, ‖M f̂ − ỹ‖₂ − r)`.
    pub constraint_violation: f64,
    /// Newton steps over both phases.
    pub iterations: usize,
    pub converged: bool,
    /// Barrier duality gap at termination.
    pub duality_gap: f64,
    /// Ball radius actually imposed; exceeds `r` by at most the feasibility
    /// tolerance when the feasible set has no interior.
    pub effective_radius: f64,
}

impl RecoveryResult {
    pub fn is_degenerate(&self) -> bool {
        self.objective <= DEGENERATE_MASS
    }
}

/// Estimates with less total mass than this are treated as empty.
pub const DEGENERATE_MASS: f64 = 1e-9;

const NEWTON_TOL: f64 = 1e-9;
const T_GROWTH: f64 = 10.0;
const CENTERING_STEPS: usize = 500;
const PHASE1_MARGIN: f64 = 1e-3;

enum Phase {
    /// `t · ½‖res‖²` plus box barrier.
    Feasibility,
    /// `t · Σf` plus box and ball barriers.
    Optimality { radius_sq: f64 },
}

struct Barrier<'a> {
    p: &'a RecoveryProblem,
    phase: Phase,
}

impl Barrier<'_> {
    /// Barrier value and residual at `f`, if `f` is strictly inside the
    /// barrier's domain.
    fn value(&self, f: &DVector<f64>, t: f64) -> Option<(f64, DVector<f64>)> {
        if f.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return None;
        }
        let residual = &self.p.matrix * f - &self.p.measurements;
        let box_term: f64 = f.iter().map(|&v| -(v.ln() + (1.0 - v).ln())).sum();
        let value = match self.phase {
            Phase::Feasibility => t * 0.5 * residual.norm_squared() + box_term,
            Phase::Optimality { radius_sq } => {
                let s = radius_sq - residual.norm_squared();
                if s <= 0.0 {
                    return None;
                }
                t * f.sum() + box_term - s.ln()
            }
        };
        value.is_finite().then_some((value, residual))
    }

    /// Newton direction and squared decrement at `f`.
    fn newton(&self, f: &DVector<f64>, res: &DVector<f64>, t: f64) -> Option<(DVector<f64>, f64)> {
        let m = &self.p.matrix;
        let n = f.len();
        let mut grad = DVector::from_fn(n, |i, _| -1.0 / f[i] + 1.0 / (1.0 - f[i]));
        let diag = DVector::from_fn(n, |i, _| {
            1.0 / (f[i] * f[i]) + 1.0 / ((1.0 - f[i]) * (1.0 - f[i]))
        });
        let mt_res = m.tr_mul(res);
        let b = match self.phase {
            Phase::Feasibility => {
                grad += &mt_res * t;
                m * t.sqrt()
            }
            Phase::Optimality { radius_sq } => {
                let s = radius_sq - res.norm_squared();
                grad.add_scalar_mut(t);
                grad += &mt_res * (2.0 / s);
                let rows = m.nrows();
                let mut b = DMatrix::zeros(rows + 1, n);
                b.rows_mut(0, rows).copy_from(&(m * (2.0 / s).sqrt()));
                b.row_mut(rows).copy_from(&(mt_res.transpose() * (2.0 / s)));
                b
            }
        };
        let rhs = -&grad;
        let step = solve_diag_plus_gram(&diag, &b, &rhs)?;
        let decrement = -grad.dot(&step);
        (decrement.is_finite()).then_some((step, decrement.max(0.0)))
    }
}

/// Solves `(diag(d) + BᵀB) x = rhs`.
///
/// Late on the central path the system is too ill-conditioned for a plain
/// factorization; the fallback factors the Jacobi-scaled matrix, adding a
/// growing ridge until it succeeds. A ridged step is still a descent
/// direction, and the step acceptance test keeps iterates feasible.
fn solve_diag_plus_gram(d: &DVector<f64>, b: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let (k, n) = b.shape();
    if k < n {
        if let Some(x) = woodbury(d, b, rhs) {
            return Some(x);
        }
    }
    let mut h = b.tr_mul(b);
    for i in 0..n {
        h[(i, i)] += d[i];
    }
    let scale = h.diagonal().map(|v| 1.0 / v.sqrt());
    for j in 0..n {
        for i in 0..n {
            h[(i, j)] *= scale[i] * scale[j];
        }
    }
    let scaled_rhs = rhs.component_mul(&scale);
    let mut ridge = 0.0;
    while ridge <= 1e-2 {
        let mut hr = h.clone();
        for i in 0..n {
            hr[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(hr) {
            let x = c.solve(&scaled_rhs).component_mul(&scale);
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
    }
    None
}

// x = D⁻¹r − D⁻¹Bᵀ (I + B D⁻¹ Bᵀ)⁻¹ B D⁻¹ r
fn woodbury(d: &DVector<f64>, b: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let k = b.nrows();
    let dinv = d.map(|v| 1.0 / v);
    let dr = rhs.component_mul(&dinv);
    let mut b_dinv = b.clone();
    for (j, mut col) in b_dinv.column_iter_mut().enumerate() {
        col *= dinv[j];
    }
    let mut small = &b_dinv * b.transpose();
    for i in 0..k {
        small[(i, i)] += 1.0;
    }
    let chol = Cholesky::new(small)?;
    let w = chol.solve(&(b * &dr));
    let x = dr - b.tr_mul(&w).component_mul(&dinv);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

struct Path {
    f: DVector<f64>,
    residual: DVector<f64>,
    steps: usize,
}

enum Centering {
    /// Newton decrement below tolerance.
    Centered,
    /// No acceptable step; the iterate is as central as rounding allows.
    Stalled,
    /// Stop condition supplied by the caller was met.
    Hit,
    Budget,
}

/// Largest `α ≤ 1` keeping `f + α d` strictly inside the box.
fn box_step(f: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let mut alpha: f64 = 1.0;
    for (x, dx) in f.iter().zip(d.iter()) {
        if *dx < 0.0 {
            alpha = alpha.min(0.99 * x / -dx);
        } else if *dx > 0.0 {
            alpha = alpha.min(0.99 * (1.0 - x) / dx);
        }
    }
    alpha
}

fn center(
    barrier: &Barrier,
    path: &mut Path,
    t: f64,
    budget: usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<Centering, RecoveryError> {
    let Some((mut value, _)) = barrier.value(&path.f, t) else {
        return Ok(Centering::Stalled);
    };
    for _ in 0..CENTERING_STEPS {
        if path.steps >= budget {
            return Ok(Centering::Budget);
        }
        let (dir, dec) = barrier
            .newton(&path.f, &path.residual, t)
            .ok_or(RecoveryError::Numerical)?;
        if dec / 2.0 <= NEWTON_TOL {
            return Ok(Centering::Centered);
        }
        path.steps += 1;
        let mut accepted = None;
        if dec.sqrt() <= 0.25 {
            // inside the region of quadratic convergence the full step is
            // feasible and decreasing; value comparisons are unreliable here
            let trial = &path.f + &dir;
            accepted = barrier.value(&trial, t).map(|(v, r)| (trial, v, r));
        } else {
            let mut alpha = box_step(&path.f, &dir);
            for _ in 0..60 {
                let trial = &path.f + &dir * alpha;
                if let Some((v, r)) = barrier.value(&trial, t) {
                    if v <= value - 0.01 * alpha * dec {
                        accepted = Some((trial, v, r));
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        let Some((f, v, res)) = accepted else {
            return Ok(Centering::Stalled);
        };
        path.f = f;
        path.residual = res;
        value = v;
        if stop(&path.residual) {
            return Ok(Centering::Hit);
        }
    }
    Ok(Centering::Stalled)
}

/// Solves the box-constrained BPD program.
pub fn bpd_solve(
    p: &RecoveryProblem,
    tol: &SolverTolerances,
) -> Result<RecoveryResult, RecoveryError> {
    let n = p.matrix.ncols();
    let r = p.radius;
    let feas_tol = tol.feasibility_tol(r);
    let budget = tol.max_iterations;

    // Phase 1: find a point strictly inside the ball.
    let mut path = Path {
        f: DVector::from_element(n, 0.5),
        residual: DVector::zeros(0),
        steps: 0,
    };
    let small = DVector::from_element(n, 1e-6);
    let small_res = &p.matrix * &small - &p.measurements;
    let inner = if r > 0.0 { r * (1.0 - PHASE1_MARGIN) } else { 0.0 };
    let effective_radius;
    if r > 0.0 && small_res.norm() <= inner {
        path.f = small;
        path.residual = small_res;
        effective_radius = r;
    } else {
        path.residual = &p.matrix * &path.f - &p.measurements;
        let barrier = Barrier {
            p,
            phase: Phase::Feasibility,
        };
        let hit = |res: &DVector<f64>| r > 0.0 && res.norm() <= inner;
        let gap_target = 1e-4 * feas_tol * feas_tol;
        let mut t = 1.0;
        let mut found = hit(&path.residual);
        while !found {
            match center(&barrier, &mut path, t, budget, &hit)? {
                Centering::Hit => found = true,
                Centering::Budget => return Err(not_converged(p, &path, r, f64::INFINITY)),
                Centering::Stalled => {
                    if 2.0 * n as f64 / t <= gap_target {
                        break;
                    }
                    t *= T_GROWTH;
                }
                Centering::Centered if r > 0.0 && path.residual.norm() < r * (1.0 - 1e-9) => {
                    found = true
                }
                Centering::Centered => {
                    let gap = 2.0 * n as f64 / t;
                    // on the central path ½ρ_min² ≥ ½‖res‖² − gap
                    let lower = 0.5 * path.residual.norm_squared() - gap;
                    let limit = r + 0.5 * feas_tol;
                    if gap <= gap_target || lower > 0.5 * limit * limit {
                        break;
                    }
                    t *= T_GROWTH;
                }
            }
        }
        if found {
            effective_radius = r;
        } else {
            let rho = path.residual.norm();
            if rho > r + 0.5 * feas_tol {
                return Err(RecoveryError::Infeasible {
                    best_residual: rho,
                    radius: r,
                });
            }
            effective_radius = r.max(rho) + 0.5 * feas_tol;
        }
    }

    // Phase 2: central path for the ℓ₁ objective.
    let barrier = Barrier {
        p,
        phase: Phase::Optimality {
            radius_sq: effective_radius * effective_radius,
        },
    };
    let constraints = (2 * n + 1) as f64;
    let never = |_: &DVector<f64>| false;
    let mut t = 1.0;
    loop {
        match center(&barrier, &mut path, t, budget, &never)? {
            Centering::Budget => {
                return Err(not_converged(p, &path, effective_radius, constraints / t));
            }
            Centering::Hit | Centering::Centered | Centering::Stalled => {}
        }
        let gap = constraints / t;
        let target = 1e-2 * tol.optimality_rel * path.f.sum().max(1.0);
        if gap <= target {
            return finish(p, &path, effective_radius, gap, true);
        }
        t *= T_GROWTH;
    }
}

/// Smallest residual `min_{f∈[0,1]ⁿ} ‖Mf − ỹ‖₂` to relative accuracy
/// about `1e-6`, with a minimizer. The radius of `p` is ignored.
pub fn least_residual(
    p: &RecoveryProblem,
    tol: &SolverTolerances,
) -> Result<(f64, Vec<f64>), RecoveryError> {
    let n = p.matrix.ncols();
    let f = DVector::from_element(n, 0.5);
    let mut path = Path {
        residual: &p.matrix * &f - &p.measurements,
        f,
        steps: 0,
    };
    let barrier = Barrier {
        p,
        phase: Phase::Feasibility,
    };
    let never = |_: &DVector<f64>| false;
    let mut t = 1.0;
    loop {
        if let Centering::Budget = center(&barrier, &mut path, t, tol.max_iterations, &never)? {
            return Err(not_converged(p, &path, p.radius, 2.0 * n as f64 / t));
        }
        if 2.0 * n as f64 / t <= 1e-6 * 0.5 * path.residual.norm_squared() + 1e-18 {
            return Ok((path.residual.norm(), path.f.iter().copied().collect()));
        }
        t *= T_GROWTH;
    }
}

fn finish(
    p: &RecoveryProblem,
    path: &Path,
    effective_radius: f64,
    gap: f64,
    converged: bool,
) -> Result<RecoveryResult, RecoveryError> {
    let weights: Vec<f64> = path.f.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let residual_norm = p.residual_norm(&weights);
    let objective = weights.iter().sum();
    Ok(RecoveryResult {
        estimate: SourceVector::new(weights, p.grid.clone())?,
        objective,
        residual_norm,
        constraint_violation: (residual_norm - p.radius).max(0.0),
        iterations: path.steps,
        converged,
        duality_gap: gap,
        effective_radius,
    })
}

fn not_converged(p: &RecoveryProblem, path: &Path, radius: f64, gap: f64) -> RecoveryError {
    match finish(p, path, radius, gap, false) {
        Ok(best) => RecoveryError::MaxIterations(Box::new(best)),
        Err(e) => e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_problem(y: &[f64], r: f64) -> RecoveryProblem {
        let n = y.len();
        RecoveryProblem::from_matrix(DMatrix::identity(n, n), y, r, Grid::Nodes(n)).unwrap()
    }

    #[test]
    fn radius_formula() {
        assert_eq!(feasibility_radius(0.0, 10, 0.3), 0.0);
        assert!((feasibility_radius(0.1, 100, 0.0) - 1.0).abs() < 1e-15);
        assert!((feasibility_radius(0.1, 100, 0.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn exact_atom_with_zero_radius() {
        let y = [0.0, 0.0, 1.0, 0.0, 0.0];
        let p = identity_problem(&y, 0.0);
        let tol = SolverTolerances::default();
        let res = bpd_solve(&p, &tol).unwrap();
        assert!(res.converged);
        for (i, v) in res.estimate.weights().iter().enumerate() {
            assert!((v - y[i]).abs() < 1e-6, "{i}: {v}");
        }
        assert!(res.constraint_violation <= tol.feasibility_tol(0.0));
    }

    #[test]
    fn zero_measurements_give_zero() {
        for r in [0.0, 0.5] {
            let p = identity_problem(&[0.0; 6], r);
            let res = bpd_solve(&p, &SolverTolerances::default()).unwrap();
            assert!(res.objective < 1e-6, "r = {r}: {}", res.objective);
            assert!(res.estimate.weights().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn infeasible_is_reported() {
        // y outside the image of the box: identity with y_0 = 3
        let p = identity_problem(&[3.0, 0.0], 0.5);
        match bpd_solve(&p, &SolverTolerances::default()) {
            Err(RecoveryError::Infeasible { best_residual, .. }) => {
                assert!(best_residual >= 2.0 - 1e-9)
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        // noisy data with zero radius
        let p = identity_problem(&[0.3, -0.1], 0.0);
        assert!(matches!(
            bpd_solve(&p, &SolverTolerances::default()),
            Err(RecoveryError::Infeasible { .. })
        ));
    }

    #[test]
    fn identity_soft_threshold() {
        // min Σf s.t. ‖f − y‖ ≤ r on the identity shrinks y along the
        // direction that lowers the sum fastest while staying in the box.
        let y = [0.8, 0.6];
        let r = 0.1;
        let p = identity_problem(&y, r);
        let res = bpd_solve(&p, &SolverTolerances::default()).unwrap();
        let shift = r / 2f64.sqrt();
        assert!((res.estimate.weights()[0] - (0.8 - shift)).abs() < 1e-6);
        assert!((res.estimate.weights()[1] - (0.6 - shift)).abs() < 1e-6);
    }

    #[test]
    fn least_residual_of_identity() {
        let p = identity_problem(&[3.0, 0.5, -1.0], 0.0);
        let (rho, f) = least_residual(&p, &SolverTolerances::default()).unwrap();
        assert!((rho - 5f64.sqrt()).abs() < 1e-5, "{rho}");
        assert!((f[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn validation() {
        let op = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            RecoveryProblem::from_matrix(op.clone(), &[1.0], 0.1, Grid::Nodes(2)),
            Err(RecoveryError::DimensionMismatch { .. })
        ));
        assert_eq!(
            RecoveryProblem::from_matrix(op, &[1.0, 0.0], -1.0, Grid::Nodes(2)),
            Err(RecoveryError::InvalidRadius(-1.0))
        );
    }

    #[test]
    fn iteration_cap_returns_best_iterate() {
        let p = identity_problem(&[0.8, 0.6, 0.1], 0.2);
        let tol = SolverTolerances {
            max_iterations: 3,
            ..Default::default()
        };
        match bpd_solve(&p, &tol) {
            Err(RecoveryError::MaxIterations(best)) => {
                assert!(!best.converged);
                assert_eq!(best.iterations, 3);
                assert!(best.estimate.weights().iter().all(|v| v.is_finite()));
            }
            other => panic!("expected MaxIterations, got {other:?}"),
        }
    }
}
