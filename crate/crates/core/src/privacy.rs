//! Sensitivity of a forward operator under the EMD-neighbour relation,
//! Gaussian-mechanism calibration, seeded release with backdoor removal,
//! and spectral diagnostics relating sensitivity to conditioning.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SVD};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{DiffusionError, DiffusionOperator, Graph, OperatorKind};
use crate::rng::{keyed_rng, Domain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrivacyError {
    #[error("invalid privacy parameters: {0}")]
    InvalidParams(String),
    #[error("need at least two sources, got {0}")]
    TooFewSources(usize),
    #[error("no neighbour pairs given")]
    EmptyPairs,
    #[error("neighbour pair ({0}, {1}) out of range for {2} columns")]
    PairOutOfRange(usize, usize, usize),
    #[error("release has {got} values but the key was issued for {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("matrix is zero")]
    ZeroMatrix,
    #[error("graph is not connected")]
    Disconnected,
    #[error("sensitivity_line needs an interval operator")]
    NotInterval,
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// `(ε, δ)` and the EMD neighbour radius `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, alpha: f64) -> Result<Self, PrivacyError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(PrivacyError::InvalidParams(format!("epsilon = {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(PrivacyError::InvalidParams(format!("delta = {delta}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PrivacyError::InvalidParams(format!("alpha = {alpha}")));
        }
        Ok(Self { epsilon, delta, alpha })
    }
}

/// Constant `c(δ)` in `σ = c(δ) Δ₂ / ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMultiplier {
    /// `2 ln(1.25/δ)`, the form used by the source localisation experiments.
    #[default]
    Printed,
    /// `√(2 ln(1.25/δ))`, the textbook Gaussian mechanism.
    Standard,
}

impl NoiseMultiplier {
    pub fn factor(self, delta: f64) -> f64 {
        let l = (1.25 / delta).ln();
        match self {
            NoiseMultiplier::Printed => 2.0 * l,
            NoiseMultiplier::Standard => (2.0 * l).sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseMultiplier::Printed => "printed",
            NoiseMultiplier::Standard => "standard",
        }
    }
}

impl std::str::FromStr for NoiseMultiplier {
    type Err = PrivacyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "printed" => Ok(Self::Printed),
            "standard" => Ok(Self::Standard),
            other => Err(PrivacyError::InvalidParams(format!("unknown multiplier {other:?}"))),
        }
    }
}

/// What one neighbour step on the line means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LineNeighbours {
    /// Adjacent grid columns; `Δ₂ = α · max_i ‖A_i − A_{i+1}‖`. With `α = 1`
    /// this is the sensitivity used by the experiments.
    #[default]
    GridStep,
    /// `α` is an EMD radius on `[0, 1]`; a radius `α` spans `α·n` grid steps,
    /// so `Δ₂ = α · n · max_i ‖A_i − A_{i+1}‖`.
    EmdRadius,
}

/// Result of a sensitivity computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub delta2: f64,
    pub argmax_pair: (usize, usize),
    /// `‖M_i − M_j‖₂` for every pair examined, in input order.
    pub per_pair_norms: Vec<f64>,
    /// `delta2 = scale · max(per_pair_norms)`.
    pub scale: f64,
}

fn column_distance(m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    m.column(i)
        .iter()
        .zip(m.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn report_from_pairs(
    m: &DMatrix<f64>,
    pairs: &[(usize, usize)],
    scale: f64,
) -> Result<SensitivityReport, PrivacyError> {
    if pairs.is_empty() {
        return Err(PrivacyError::EmptyPairs);
    }
    let n = m.ncols();
    let mut norms = Vec::with_capacity(pairs.len());
    let mut best = (0.0_f64, pairs[0]);
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(PrivacyError::PairOutOfRange(i, j, n));
        }
        let d = column_distance(m, i, j);
        if d > best.0 {
            best = (d, (i, j));
        }
        norms.push(d);
    }
    Ok(SensitivityReport {
        delta2: scale * best.0,
        argmax_pair: best.1,
        per_pair_norms: norms,
        scale,
    })
}

/// Exact sensitivity of an interval heat-kernel operator over adjacent
/// source columns.
pub fn sensitivity_line(
    a: &DiffusionOperator,
    alpha: f64,
    neighbours: LineNeighbours,
) -> Result<SensitivityReport, PrivacyError> {
    if !matches!(a.kind(), OperatorKind::Interval { .. }) {
        return Err(PrivacyError::NotInterval);
    }
    sensitivity_adjacent_columns(a.matrix(), alpha, neighbours)
}

/// [`sensitivity_line`] for a bare matrix whose columns sit on a line.
pub fn sensitivity_adjacent_columns(
    m: &DMatrix<f64>,
    alpha: f64,
    neighbours: LineNeighbours,
) -> Result<SensitivityReport, PrivacyError> {
    let n = m.ncols();
    if n < 2 {
        return Err(PrivacyError::TooFewSources(n));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(PrivacyError::InvalidParams(format!("alpha = {alpha}")));
    }
    let pairs: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let scale = match neighbours {
        LineNeighbours::GridStep => alpha,
        LineNeighbours::EmdRadius => alpha * n as f64,
    };
    report_from_pairs(m, &pairs, scale)
}

/// `α · max_{(i,j) ∈ pairs} ‖M_i − M_j‖₂`.
pub fn sensitivity_general(
    m: &DMatrix<f64>,
    neighbour_pairs: &[(usize, usize)],
    alpha: f64,
) -> Result<SensitivityReport, PrivacyError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(PrivacyError::InvalidParams(format!("alpha = {alpha}")));
    }
    report_from_pairs(m, neighbour_pairs, alpha)
}

/// Noise standard deviation `σ = c(δ) Δ₂ / ε`.
pub fn gaussian_sigma(
    p: &PrivacyParams,
    delta2: f64,
    multiplier: NoiseMultiplier,
) -> Result<f64, PrivacyError> {
    if !(delta2 >= 0.0 && delta2.is_finite()) {
        return Err(PrivacyError::InvalidParams(format!("delta2 = {delta2}")));
    }
    PrivacyParams::new(p.epsilon, p.delta, p.alpha)?;
    Ok(multiplier.factor(p.delta) * delta2 / p.epsilon)
}

/// Released noise is rounded to multiples of `2^-NOISE_QUANTUM_BITS`.
///
/// With measurements on the same lattice and `|y| + |z| < 2^(52 − bits)`,
/// both `y + z` and `ỹ − z` are exact, so the backdoor returns `y` bit for
/// bit. Without a lattice the round trip is exact up to one rounding.
pub const NOISE_QUANTUM_BITS: i32 = 36;

/// Rounds a measurement onto the release lattice.
pub fn quantize(v: f64) -> f64 {
    let q = (NOISE_QUANTUM_BITS as f64).exp2();
    (v * q).round() / q
}

/// The noise added to coordinate `index`; a pure function of its inputs.
pub fn noise_at(sigma: f64, seed: u64, index: usize) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let mut rng = keyed_rng(seed, Domain::MeasurementNoise, index as u64);
    let z: f64 = StandardNormal.sample(&mut rng);
    quantize(sigma * z)
}

/// What a trusted party needs to strip the noise again.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackdoorKey {
    pub sigma: f64,
    pub seed: u64,
    pub len: usize,
}

/// A privatized measurement vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    pub values: Vec<f64>,
    pub key: BackdoorKey,
}

/// Adds seeded `N(0, σ²)` noise to every coordinate independently.
pub fn privatize(y: &[f64], sigma: f64, seed: u64) -> Result<Release, PrivacyError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(PrivacyError::InvalidParams(format!("sigma = {sigma}")));
    }
    let values = y
        .iter()
        .enumerate()
        .map(|(i, &v)| v + noise_at(sigma, seed, i))
        .collect();
    Ok(Release {
        values,
        key: BackdoorKey {
            sigma,
            seed,
            len: y.len(),
        },
    })
}

/// Regenerates the noise stream from the key and subtracts it.
pub fn denoise_backdoor(y_tilde: &[f64], key: &BackdoorKey) -> Result<Vec<f64>, PrivacyError> {
    if y_tilde.len() != key.len {
        return Err(PrivacyError::LengthMismatch {
            expected: key.len,
            got: y_tilde.len(),
        });
    }
    Ok(y_tilde
        .iter()
        .enumerate()
        .map(|(i, &v)| v - noise_at(key.sigma, key.seed, i))
        .collect())
}

/// A named inequality evaluated on a concrete matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs ≤ rhs` (or `≥`, per `name`) holds within tolerance.
    pub holds: bool,
    /// The inequality's hypotheses are met by this matrix.
    pub applicable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `s_max / s_min`, with `s_min` the smallest nonzero singular value.
    pub kappa2: f64,
    /// Largest `|⟨M_i, M_j⟩|`, `i ≠ j`, over unit-normalized nonzero columns.
    pub coherence_mu: f64,
    /// `Δ₂(M)` for the given pairs and `α`.
    pub delta2: f64,
    pub checks: Vec<BoundCheck>,
}

/// Singular values, conditioning, coherence and the sensitivity/spectrum
/// inequalities for `M` under the given neighbour pairs.
///
/// Checks reported:
/// - `illconditioned`: `Δ₂(M/‖M‖₂) ≥ α/κ₂(M)`. Its argument replaces one
///   column by a neighbour to produce a rank-deficient matrix, which only
///   lowers the rank when `n ≤ m`; wider matrices are marked not
///   applicable.
/// - `column_norms`: `max |‖M_i‖ − ‖M_j‖| ≤ ν/α` with `ν = Δ₂(M)`.
/// - `tail_spectrum_stated`: `Σ_{i≠max} s_i ≤ (n+1)^{3/2} ρ ν/α`.
/// - `tail_spectrum_derived`: `Σ_{i≠max} s_i ≤ (√min(n,m)+1) ρ (n−1) ν/α`.
///
/// `ρ` is the hop diameter of the neighbour graph.
pub fn spectral_diagnostics(
    m: &DMatrix<f64>,
    neighbour_pairs: &[(usize, usize)],
    alpha: f64,
) -> Result<SpectralDiagnostics, PrivacyError> {
    if m.amax() == 0.0 {
        return Err(PrivacyError::ZeroMatrix);
    }
    let (rows, cols) = m.shape();
    let sens = sensitivity_general(m, neighbour_pairs, alpha)?;
    let nu = sens.delta2;

    let svd = SVD::new(m.clone(), false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let s_max = sv[0];
    let cutoff = s_max * rows.max(cols) as f64 * f64::EPSILON;
    let s_min = sv.iter().rev().copied().find(|&s| s > cutoff).unwrap_or(s_max);
    let kappa2 = s_max / s_min;
    let rank = sv.iter().filter(|&&s| s > cutoff).count();

    let norms: Vec<f64> = (0..cols).map(|j| m.column(j).norm()).collect();
    let mut coherence: f64 = 0.0;
    for i in 0..cols {
        for j in i + 1..cols {
            if norms[i] > 0.0 && norms[j] > 0.0 {
                let c = m.column(i).dot(&m.column(j)) / (norms[i] * norms[j]);
                coherence = coherence.max(c.abs());
            }
        }
    }
    let coherence = coherence.min(1.0);

    let mut checks = Vec::new();

    // ill-conditioning: rescale to unit spectral norm, κ₂ is scale-free
    let scaled_delta2 = nu / s_max;
    let rhs = alpha / kappa2;
    checks.push(BoundCheck {
        name: "illconditioned: delta2(M/|M|) >= alpha/kappa2".into(),
        lhs: scaled_delta2,
        rhs,
        holds: scaled_delta2 >= rhs - 1e-9,
        applicable: cols <= rows && rank == cols,
    });

    let norm_gap = neighbour_pairs
        .iter()
        .map(|&(i, j)| (norms[i] - norms[j]).abs())
        .fold(0.0, f64::max);
    checks.push(BoundCheck {
        name: "column_norms: max |‖M_i‖-‖M_j‖| <= nu/alpha".into(),
        lhs: norm_gap,
        rhs: nu / alpha,
        holds: norm_gap <= nu / alpha + 1e-12 * s_max,
        applicable: true,
    });

    let tail: f64 = sv.iter().skip(1).sum();
    let rho = hop_diameter(cols, neighbour_pairs);
    let applicable = rho.is_finite();
    let n = cols as f64;
    let stated = (n + 1.0).powf(1.5) * rho * nu / alpha;
    let derived = ((rows.min(cols) as f64).sqrt() + 1.0) * rho * (n - 1.0) * nu / alpha;
    let slack = 1e-12 * s_max * n;
    checks.push(BoundCheck {
        name: "tail_spectrum_stated: sum_{i!=max} s_i <= (n+1)^1.5 rho nu/alpha".into(),
        lhs: tail,
        rhs: stated,
        holds: tail <= stated + slack,
        applicable,
    });
    checks.push(BoundCheck {
        name: "tail_spectrum_derived: sum_{i!=max} s_i <= (sqrt(min(n,m))+1) rho (n-1) nu/alpha"
            .into(),
        lhs: tail,
        rhs: derived,
        holds: tail <= derived + slack,
        applicable,
    });

    Ok(SpectralDiagnostics {
        singular_values: sv,
        kappa2,
        coherence_mu: coherence,
        delta2: nu,
        checks,
    })
}

fn hop_diameter(n: usize, pairs: &[(usize, usize)]) -> f64 {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in pairs {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut diameter = 0usize;
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if dist.contains(&usize::MAX) {
            return f64::INFINITY;
        }
        diameter = diameter.max(*dist.iter().max().unwrap());
    }
    diameter as f64
}

/// Upper bound on `‖(A_G)_i − (A_G)_j‖₂` from the Laplacian eigenvectors:
/// `Σ_{k≥2} e^{−τ s_k} |U_{ik} − U_{jk}|`.
pub fn graph_sensitivity_bound(
    g: &Graph,
    tau: f64,
    pair: (usize, usize),
) -> Result<f64, PrivacyError> {
    if !g.is_connected() {
        return Err(PrivacyError::Disconnected);
    }
    let n = g.len();
    if pair.0 >= n || pair.1 >= n {
        return Err(PrivacyError::PairOutOfRange(pair.0, pair.1, n));
    }
    let spectrum = g.spectrum()?;
    Ok(bound_from_spectrum(&spectrum, tau, pair))
}

/// [`graph_sensitivity_bound`] reusing a computed spectrum.
pub fn bound_from_spectrum(
    spectrum: &crate::diffusion::LaplacianSpectrum,
    tau: f64,
    (i, j): (usize, usize),
) -> f64 {
    let u = &spectrum.eigenvectors;
    (1..spectrum.eigenvalues.len())
        .map(|k| (-tau * spectrum.eigenvalues[k]).exp() * (u[(i, k)] - u[(j, k)]).abs())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableGraph {
    Complete,
    Star,
}

/// Reference closed forms for `Δ₂(A_G)²`, evaluated literally:
///
/// - complete: `2 e^{−τn}`
/// - star: `e^{−2τn} + ((e^{−τn} − e^{−τ})/(n−1))² + ((e^{−τn} − e^{−τ})/(n−1) + e^{−τ})²`
pub fn closed_form_graph_delta2_sq(kind: TableGraph, n: usize, tau: f64) -> f64 {
    let nf = n as f64;
    let en = (-tau * nf).exp();
    match kind {
        TableGraph::Complete => 2.0 * en,
        TableGraph::Star => {
            let e1 = (-tau).exp();
            let c = (en - e1) / (nf - 1.0);
            (-2.0 * tau * nf).exp() + c * c + (c + e1) * (c + e1)
        }
    }
}
