//! Evaluators for the EMD error bounds and the four-point packing used in
//! the minimax lower bound.
//!
//! Every hidden asymptotic constant is set to 1 (see [`CONSTANT_CONVENTION`]),
//! so these numbers are for trend and shape checks only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{apply, heat_kernel_matrix, DiffusionError};
use crate::emd::{emd_line, EmdError, Grid, SourceVector};

pub const CONSTANT_CONVENTION: &str = "all hidden asymptotic constants set to 1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid of {n} points cannot resolve offset {a}")]
    GridTooCoarse { a: f64, n: usize },
    #[error(transparent)]
    Emd(#[from] EmdError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// Inputs of the upper bound. `sep` is the margin `A` in the separation
/// hypothesis `|x_i − x_j| > √(2T) + 2A`; `source_gap` is the actual
/// minimum distance between sources, when known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub k: usize,
    pub big_t: f64,
    pub sigma: f64,
    pub m: usize,
    pub n: usize,
    pub sep: f64,
    pub source_gap: Option<f64>,
}

impl BoundInputs {
    pub fn new(k: usize, big_t: f64, sigma: f64, m: usize, n: usize, sep: f64) -> Result<Self, BoundsError> {
        if k == 0 || m == 0 || n == 0 {
            return Err(BoundsError::InvalidArgument("k, m and n must be positive".into()));
        }
        if !(big_t > 0.0 && big_t.is_finite()) {
            return Err(BoundsError::InvalidArgument(format!("T must be positive, got {big_t}")));
        }
        if !(sigma >= 0.0) {
            return Err(BoundsError::InvalidArgument(format!("sigma must be nonnegative, got {sigma}")));
        }
        if !(sep > 0.0) {
            return Err(BoundsError::InvalidArgument(format!("sep must be positive, got {sep}")));
        }
        Ok(Self {
            k,
            big_t,
            sigma,
            m,
            n,
            sep,
            source_gap: None,
        })
    }

    pub fn with_source_gap(mut self, gap: f64) -> Self {
        self.source_gap = Some(gap);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub value: f64,
    /// `min{k, √T[σ + k e^{−sep²/4T}]}`.
    pub c: f64,
    pub hypotheses_hold: bool,
    pub violations: Vec<String>,
    /// `min{1, C} = 1`, so the `1/(1 − min{1, C})` prefactor is infinite.
    pub prefactor_infinite: bool,
    pub convention: String,
}

pub fn upper_bound_emd(b: &BoundInputs) -> UpperBound {
    let t = b.big_t;
    let k = b.k as f64;
    let m = b.m as f64;
    let mut violations = Vec::new();
    if m * (t / 2.0).sqrt() <= 1.0 {
        violations.push("m sqrt(T/2) > 1".to_string());
    }
    if (2.0 * t).sqrt() >= 1.0 {
        violations.push("sqrt(2T) < 1".to_string());
    }
    if let Some(gap) = b.source_gap {
        if gap <= (2.0 * t).sqrt() + 2.0 * b.sep {
            violations.push("source gap > sqrt(2T) + 2 sep".to_string());
        }
    }

    let c = k.min(t.sqrt() * (b.sigma + k * (-b.sep * b.sep / (4.0 * t)).exp()));
    let c1 = c.min(1.0);
    let prefactor_infinite = c1 >= 1.0;
    let value = if !violations.is_empty() || prefactor_infinite {
        1.0
    } else {
        let inner = (t.powf(1.5) * c / (t.sqrt() + 1.0)).sqrt() / k
            + k * c1
            + t * t * c / ((t + 1.0) * k);
        (inner / (1.0 - c1)).min(1.0)
    };
    UpperBound {
        value,
        c,
        hypotheses_hold: violations.is_empty(),
        violations,
        prefactor_infinite,
        convention: CONSTANT_CONVENTION.into(),
    }
}

/// `min{1/2, T^{3/2} σ / √m}`.
pub fn lower_bound_emd(big_t: f64, sigma: f64, m: usize) -> Result<f64, BoundsError> {
    if !(big_t > 0.0) || !(sigma >= 0.0) || m == 0 {
        return Err(BoundsError::InvalidArgument(format!(
            "need T > 0, sigma >= 0, m >= 1; got T={big_t}, sigma={sigma}, m={m}"
        )));
    }
    Ok((big_t.powf(1.5) * (sigma / (m as f64).sqrt())).min(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCheck {
    /// `(√m / T^{3/2}) · EMD(f, f2)`.
    pub bound: f64,
    /// `‖A f − A f2‖₂` for the heat-kernel operator at time `T`.
    pub actual: f64,
    /// `actual / bound`, the empirical constant; `None` when the bound is 0.
    pub ratio: Option<f64>,
}

pub fn lipschitz_forward_bound(
    f: &SourceVector,
    f2: &SourceVector,
    m: usize,
    big_t: f64,
) -> Result<LipschitzCheck, BoundsError> {
    let emd = emd_line(f, f2)?;
    let bound = (m as f64).sqrt() / big_t.powf(1.5) * emd;
    let op = heat_kernel_matrix(f.len(), m, 1.0, big_t)?;
    let diff: Vec<f64> = f.weights().iter().zip(f2.weights()).map(|(a, b)| a - b).collect();
    let actual = apply(&op, &diff)?.norm();
    Ok(LipschitzCheck {
        bound,
        actual,
        ratio: (bound > 0.0).then(|| actual / bound),
    })
}

/// KL divergence between `N(Af, σ²I)` and `N(Af', σ²I)`.
pub fn gaussian_kl(af: &[f64], af2: &[f64], sigma: f64) -> f64 {
    let sq: f64 = af.iter().zip(af2).map(|(a, b)| (a - b) * (a - b)).sum();
    sq / (2.0 * sigma * sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoPacking {
    pub a: f64,
    pub members: Vec<SourceVector>,
    pub pairwise_emd: Vec<Vec<f64>>,
    /// Largest distance between a requested location and its grid point.
    pub snap_error: f64,
    /// Grid indices of `1/2 − a, 1/2 − a/2, 1/2, 1/2 + a/2, 1/2 + a`.
    pub indices: [usize; 5],
}

/// The packing
/// `e_{1/2}`, `½e_{1/2−a/2} + ½e_{1/2+a/2}`, `¼e_{1/2−a} + ½e_{1/2} + ¼e_{1/2+a}`,
/// `½e_{1/2} + ½e_{1/2+a}` on the grid `{1/n, …, 1}`.
pub fn fano_packing(a: f64, n: usize) -> Result<FanoPacking, BoundsError> {
    if !(a >= 0.0 && a <= 0.5) || n == 0 {
        return Err(BoundsError::InvalidArgument(format!("need 0 <= a <= 1/2 and n >= 1, got a={a}, n={n}")));
    }
    let grid = Grid::unit_interval(n);
    let pos = grid.positions().expect("interval grid").to_vec();
    let targets = [0.5 - a, 0.5 - a / 2.0, 0.5, 0.5 + a / 2.0, 0.5 + a];
    let mut indices = [0usize; 5];
    let mut snap_error: f64 = 0.0;
    for (slot, &x) in targets.iter().enumerate() {
        let i = grid.nearest(x).expect("nonempty grid");
        indices[slot] = i;
        snap_error = snap_error.max((pos[i] - x).abs());
    }
    if a > 0.0 && indices.windows(2).any(|w| w[0] == w[1]) {
        return Err(BoundsError::GridTooCoarse { a, n });
    }
    let [lo, half_lo, mid, half_hi, hi] = indices;
    let build = |parts: &[(usize, f64)]| {
        let mut w = vec![0.0; n];
        for &(i, v) in parts {
            w[i] += v;
        }
        SourceVector::new(w, grid.clone())
    };
    let members = vec![
        build(&[(mid, 1.0)])?,
        build(&[(half_lo, 0.5), (half_hi, 0.5)])?,
        build(&[(lo, 0.25), (mid, 0.5), (hi, 0.25)])?,
        build(&[(mid, 0.5), (hi, 0.5)])?,
    ];
    let mut pairwise_emd = vec![vec![0.0; 4]; 4];
    for i in 0..4 {
        for j in i + 1..4 {
            let d = emd_line(&members[i], &members[j])?;
            pairwise_emd[i][j] = d;
            pairwise_emd[j][i] = d;
        }
    }
    Ok(FanoPacking {
        a,
        members,
        pairwise_emd,
        snap_error,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_examples() {
        assert_eq!(lower_bound_emd(0.5, 0.1, 50).unwrap(), 0.005);
        assert_eq!(lower_bound_emd(0.5, 0.0, 50).unwrap(), 0.0);
        assert_eq!(lower_bound_emd(0.5, 1e6, 50).unwrap(), 0.5);
        assert!(lower_bound_emd(0.0, 0.1, 50).is_err());
    }

    #[test]
    fn lower_bound_scaling_is_exact() {
        let base = lower_bound_emd(0.3, 0.02, 40).unwrap();
        assert_eq!(lower_bound_emd(0.3, 0.04, 40).unwrap(), 2.0 * base);
        assert_eq!(lower_bound_emd(0.3, 0.02, 160).unwrap(), base / 2.0);
    }

    #[test]
    fn upper_bound_vanishes_without_noise() {
        let b = BoundInputs::new(1, 0.05, 0.0, 50, 100, 50.0).unwrap();
        let u = upper_bound_emd(&b);
        assert!(u.hypotheses_hold);
        assert!(u.c < 1e-300);
        assert!(u.value < 1e-100);
    }

    #[test]
    fn upper_bound_monotone_in_sigma() {
        let mut last = 0.0;
        for i in 0..=100 {
            let sigma = i as f64 / 100.0;
            let b = BoundInputs::new(2, 0.05, sigma, 50, 100, 0.2).unwrap();
            let u = upper_bound_emd(&b);
            assert!(u.value <= 1.0);
            assert!(u.value >= last, "sigma {sigma}");
            last = u.value;
        }
    }

    #[test]
    fn upper_bound_flags() {
        let b = BoundInputs::new(1, 0.6, 0.1, 50, 100, 1.0).unwrap();
        let u = upper_bound_emd(&b);
        assert!(!u.hypotheses_hold);
        assert_eq!(u.value, 1.0);

        let b = BoundInputs::new(1, 0.05, 100.0, 50, 100, 1.0).unwrap();
        let u = upper_bound_emd(&b);
        assert!(u.prefactor_infinite);
        assert_eq!(u.value, 1.0);

        let b = BoundInputs::new(2, 0.05, 0.0, 50, 100, 0.1)
            .unwrap()
            .with_source_gap(0.2);
        assert!(!upper_bound_emd(&b).hypotheses_hold);
        assert!(BoundInputs::new(0, 0.05, 0.0, 50, 100, 0.1).is_err());
    }

    #[test]
    fn lipschitz_identical_is_zero() {
        let f = SourceVector::atom(10, Grid::unit_interval(100)).unwrap();
        let c = lipschitz_forward_bound(&f, &f, 50, 0.5).unwrap();
        assert_eq!(c.bound, 0.0);
        assert_eq!(c.actual, 0.0);
        assert_eq!(c.ratio, None);
    }

    #[test]
    fn packing_collapses_at_zero() {
        let p = fano_packing(0.0, 100).unwrap();
        assert!(p.pairwise_emd.iter().flatten().all(|&d| d == 0.0));
        assert_eq!(p.snap_error, 0.0);
    }

    #[test]
    fn packing_too_coarse() {
        assert_eq!(fano_packing(0.02, 10), Err(BoundsError::GridTooCoarse { a: 0.02, n: 10 }));
        assert!(fano_packing(0.7, 100).is_err());
    }

    #[test]
    fn packing_indices_on_fine_grid() {
        let p = fano_packing(0.2, 100).unwrap();
        assert_eq!(p.indices, [29, 39, 49, 59, 69]);
        assert!(p.snap_error < 1e-12);
        for m in &p.members {
            assert!((m.mass() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_is_half_squared_distance() {
        assert_eq!(gaussian_kl(&[1.0, 2.0], &[1.0, 0.0], 1.0), 2.0);
        assert_eq!(gaussian_kl(&[0.3], &[0.3], 0.1), 0.0);
    }
}
