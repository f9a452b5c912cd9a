//! Forward operators: the free-space heat kernel on the unit interval and
//! graph diffusion `e^{−τL}`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emd::SourceVector;
use crate::rng::{keyed_rng, Domain};

/// Eigenvalues of `L` above this (negative) value are clamped to zero.
pub const PSD_CLAMP: f64 = -1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("effective time must be positive and finite, got {0}")]
    InvalidTime(f64),
    #[error("grid sizes must be at least 1 (n = {n}, m = {m})")]
    InvalidSize { n: usize, m: usize },
    #[error("weight matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("negative or non-finite weight at ({0}, {1})")]
    NegativeWeight(usize, usize),
    #[error("weight matrix must be square with zero diagonal")]
    BadShape,
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),
    #[error("dimension mismatch: operator has {expected} columns, vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid SBM parameters: {0}")]
    InvalidSbm(String),
}

/// Heat kernel `g(x, T) = (4πT)^{−1/2} exp(−x² / 4T)`.
pub fn gaussian_kernel(x: f64, big_t: f64) -> Result<f64, DiffusionError> {
    if !(big_t > 0.0 && big_t.is_finite()) {
        return Err(DiffusionError::InvalidTime(big_t));
    }
    Ok((-x * x / (4.0 * big_t)).exp() / (4.0 * std::f64::consts::PI * big_t).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OperatorKind {
    /// Heat kernel on `[0, 1]` with diffusion constant `mu`, measured at `t`.
    Interval { mu: f64, t: f64 },
    /// `e^{−τL}` on a graph.
    Graph { tau: f64 },
}

/// Linear forward map from sources (columns) to sensors (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperator {
    matrix: DMatrix<f64>,
    kind: OperatorKind,
}

impl DiffusionOperator {
    /// Wraps an arbitrary nonnegative matrix, e.g. one read back from CSV.
    pub fn from_parts(matrix: DMatrix<f64>, kind: OperatorKind) -> Self {
        Self { matrix, kind }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// `T = μt` for the interval kernel, `τ` for graphs.
    pub fn effective_time(&self) -> f64 {
        match self.kind {
            OperatorKind::Interval { mu, t } => mu * t,
            OperatorKind::Graph { tau } => tau,
        }
    }

    pub fn sensors(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn sources(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `m × n` heat-kernel operator: rows are sensors at `i/m`, columns are
/// sources at `j/n`, entry `g(j/n − i/m, μt)`.
pub fn heat_kernel_matrix(
    n: usize,
    m: usize,
    mu: f64,
    t: f64,
) -> Result<DiffusionOperator, DiffusionError> {
    if n == 0 || m == 0 {
        return Err(DiffusionError::InvalidSize { n, m });
    }
    if !(mu > 0.0 && t > 0.0) {
        return Err(DiffusionError::InvalidTime(mu * t));
    }
    let big_t = mu * t;
    gaussian_kernel(0.0, big_t)?;
    let matrix = DMatrix::from_fn(m, n, |i, j| {
        let x = (j + 1) as f64 / n as f64 - (i + 1) as f64 / m as f64;
        (-x * x / (4.0 * big_t)).exp() / (4.0 * std::f64::consts::PI * big_t).sqrt()
    });
    Ok(DiffusionOperator {
        matrix,
        kind: OperatorKind::Interval { mu, t },
    })
}

/// Weighted undirected graph with its Laplacian `L = D − W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    weights: DMatrix<f64>,
    degrees: DVector<f64>,
    laplacian: DMatrix<f64>,
}

/// Eigenpairs of a graph Laplacian, ascending.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub eigenvalues: DVector<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

impl LaplacianSpectrum {
    /// Algebraic connectivity `s₂`.
    pub fn algebraic_connectivity(&self) -> f64 {
        if self.eigenvalues.len() < 2 {
            0.0
        } else {
            self.eigenvalues[1]
        }
    }
}

/// Builds the Laplacian of a symmetric, nonnegative, zero-diagonal `W`.
pub fn graph_laplacian(w: &DMatrix<f64>) -> Result<Graph, DiffusionError> {
    let n = w.nrows();
    if n == 0 || w.ncols() != n {
        return Err(DiffusionError::BadShape);
    }
    for i in 0..n {
        if w[(i, i)] != 0.0 {
            return Err(DiffusionError::BadShape);
        }
        for j in 0..n {
            let v = w[(i, j)];
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DiffusionError::NegativeWeight(i, j));
            }
            if v != w[(j, i)] {
                return Err(DiffusionError::Asymmetric(i, j));
            }
        }
    }
    let degrees = DVector::from_fn(n, |i, _| w.row(i).sum());
    let laplacian = DMatrix::from_diagonal(&degrees) - w;
    Ok(Graph {
        weights: w.clone(),
        degrees,
        laplacian,
    })
}

impl Graph {
    /// Unweighted graph from an edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, DiffusionError> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(DiffusionError::BadShape);
            }
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
        graph_laplacian(&w)
    }

    pub fn complete(n: usize) -> Self {
        let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        graph_laplacian(&w).expect("complete graph is valid")
    }

    /// Star with centre 0 and leaves `1..n`.
    pub fn star(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|j| (0, j)).collect();
        Self::from_edges(n, &edges).expect("star graph is valid")
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|j| (j - 1, j)).collect();
        Self::from_edges(n, &edges).expect("path graph is valid")
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Pairs `(i, j)`, `i < j`, joined by an edge of positive weight.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.weights[(i, j)] > 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Connected components, each sorted ascending; components are ordered
    /// by their smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    if !seen[v] && self.weights[(u, v)] > 0.0 {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Symmetric eigendecomposition of `L`, eigenvalues ascending and
    /// clamped at zero from below.
    pub fn spectrum(&self) -> Result<LaplacianSpectrum, DiffusionError> {
        let eig = SymmetricEigen::try_new(self.laplacian.clone(), f64::EPSILON, 0)
            .ok_or_else(|| DiffusionError::EigenFailure("no convergence".into()))?;
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut values = DVector::zeros(n);
        let mut vectors = DMatrix::zeros(n, n);
        for (k, &src) in order.iter().enumerate() {
            let mut s = eig.eigenvalues[src];
            if !s.is_finite() {
                return Err(DiffusionError::EigenFailure("non-finite eigenvalue".into()));
            }
            if s < 0.0 {
                if s < PSD_CLAMP {
                    return Err(DiffusionError::EigenFailure(format!(
                        "Laplacian eigenvalue {s:e} below {PSD_CLAMP:e}"
                    )));
                }
                s = 0.0;
            }
            values[k] = s;
            vectors.set_column(k, &eig.eigenvectors.column(src));
        }
        Ok(LaplacianSpectrum {
            eigenvalues: values,
            eigenvectors: vectors,
        })
    }
}

/// `e^{−τL}` via the eigendecomposition `L = U Σ Uᵀ`.
pub fn graph_diffusion_operator(g: &Graph, tau: f64) -> Result<DiffusionOperator, DiffusionError> {
    let spectrum = g.spectrum()?;
    diffusion_from_spectrum(&spectrum, tau)
}

/// As [`graph_diffusion_operator`], reusing an existing spectrum.
pub fn diffusion_from_spectrum(
    spectrum: &LaplacianSpectrum,
    tau: f64,
) -> Result<DiffusionOperator, DiffusionError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(DiffusionError::InvalidTime(tau));
    }
    let u = &spectrum.eigenvectors;
    let decay = spectrum.eigenvalues.map(|s| (-tau * s).exp());
    let mut scaled = u.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= decay[k];
    }
    let a = &scaled * u.transpose();
    let matrix = (&a + a.transpose()) * 0.5;
    Ok(DiffusionOperator {
        matrix,
        kind: OperatorKind::Graph { tau },
    })
}

/// A stochastic block model draw.
#[derive(Debug, Clone)]
pub struct SbmSample {
    pub graph: Graph,
    /// Community of each node.
    pub membership: Vec<usize>,
    pub connected: bool,
}

/// Undirected unit-weight SBM graph on `n` nodes split into contiguous,
/// near-equal communities.
///
/// The coin for pair `(i, j)` depends only on `(seed, i, j)`.
pub fn sbm_sample(
    n: usize,
    num_communities: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<SbmSample, DiffusionError> {
    if num_communities == 0 || n < num_communities {
        return Err(DiffusionError::InvalidSbm(format!(
            "need 1 <= communities <= n, got {num_communities} for n = {n}"
        )));
    }
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(DiffusionError::InvalidSbm(format!("probability {p} outside [0, 1]")));
        }
    }
    let membership: Vec<usize> = (0..n).map(|i| i * num_communities / n).collect();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        // one ChaCha stream per row, one word pair per column
        let mut rng = keyed_rng(seed, Domain::SbmEdges, i as u64);
        for j in i + 1..n {
            rng.set_word_pos(2 * j as u128);
            let u: f64 = rng.random();
            let p = if membership[i] == membership[j] { p_in } else { p_out };
            if u < p {
                w[(i, j)] = 1.0;
                w[(j, i)] = 1.0;
            }
        }
    }
    let graph = graph_laplacian(&w)?;
    let connected = graph.is_connected();
    Ok(SbmSample {
        graph,
        membership,
        connected,
    })
}

/// `y = A f`.
pub fn forward(a: &DiffusionOperator, f: &SourceVector) -> Result<DVector<f64>, DiffusionError> {
    apply(a, f.weights())
}

/// `y = A f` for a raw coefficient slice.
pub fn apply(a: &DiffusionOperator, f: &[f64]) -> Result<DVector<f64>, DiffusionError> {
    if f.len() != a.sources() {
        return Err(DiffusionError::DimensionMismatch {
            expected: a.sources(),
            got: f.len(),
        });
    }
    Ok(&a.matrix * DVector::from_column_slice(f))
}
