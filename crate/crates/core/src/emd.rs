//! Earth Mover Distance between unit-mass source vectors.
//!
//! Two routes are provided and are expected to agree on the line:
//!
//! - [`emd_line`]: the closed form `Σ |P_i − Q_i| (x_{i+1} − x_i)` over
//!   prefix sums, valid for any ascending grid.
//! - [`emd_flow`]: the transportation problem over an arbitrary
//!   [`GroundMetric`], solved exactly by successive shortest paths and
//!   certified by a dual bound.
//!
//! Inputs must already be normalized; nothing here rescales silently.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::Graph;

/// Tolerance on `Σ p_i = 1` for inputs to the EMD routines.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Required duality gap of the transportation solve.
pub const DUALITY_GAP_TOL: f64 = 1e-9;
/// Triangle inequality is verified on construction up to this size.
pub const TRIANGLE_CHECK_MAX_N: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmdError {
    #[error("source vector has zero mass")]
    ZeroMass,
    #[error("source vector is not normalized (sum = {0})")]
    NotNormalized(f64),
    #[error("grids differ")]
    GridMismatch,
    #[error("grid is not an ascending interval grid")]
    UnsortedGrid,
    #[error("weight {value} at index {index} outside [0, 1]")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("weights ({weights}) and grid ({grid}) differ in length")]
    LengthMismatch { weights: usize, grid: usize },
    #[error("empty grid")]
    EmptyGrid,
    #[error("invalid ground metric: {0}")]
    InvalidMetric(String),
    #[error("graph is disconnected: no path from {0} to {1}")]
    Disconnected(usize, usize),
    #[error("transportation solve failed: {0}")]
    SolverFailure(String),
}

/// Locations carried by a [`SourceVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    /// Real coordinates on a line, ascending.
    Interval(Vec<f64>),
    /// Node ids `0..count` of a graph.
    Nodes(usize),
}

impl Grid {
    /// Source locations `{1/n, 2/n, …, 1}`.
    pub fn unit_interval(n: usize) -> Self {
        Grid::Interval((1..=n).map(|i| i as f64 / n as f64).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Interval(x) => x.len(),
            Grid::Nodes(c) => *c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn positions(&self) -> Option<&[f64]> {
        match self {
            Grid::Interval(x) => Some(x),
            Grid::Nodes(_) => None,
        }
    }

    /// Index of the grid point nearest to `x` (interval grids only).
    pub fn nearest(&self, x: f64) -> Option<usize> {
        let pos = self.positions()?;
        pos.iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
    }
}

/// Nonnegative source intensities in `[0, 1]` over a grid of locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceVector {
    weights: Vec<f64>,
    grid: Grid,
}

impl SourceVector {
    pub fn new(weights: Vec<f64>, grid: Grid) -> Result<Self, EmdError> {
        if grid.is_empty() {
            return Err(EmdError::EmptyGrid);
        }
        if weights.len() != grid.len() {
            return Err(EmdError::LengthMismatch {
                weights: weights.len(),
                grid: grid.len(),
            });
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(EmdError::WeightOutOfRange { index, value });
            }
        }
        Ok(Self { weights, grid })
    }

    /// Source vector on the unit-interval grid `{1/n, …, 1}`.
    pub fn on_unit_interval(weights: Vec<f64>) -> Result<Self, EmdError> {
        let n = weights.len();
        Self::new(weights, Grid::unit_interval(n))
    }

    /// Source vector on graph nodes `0..n`.
    pub fn on_nodes(weights: Vec<f64>) -> Result<Self, EmdError> {
        let n = weights.len();
        Self::new(weights, Grid::Nodes(n))
    }

    /// Unit atom at `index`.
    pub fn atom(index: usize, grid: Grid) -> Result<Self, EmdError> {
        let mut w = vec![0.0; grid.len()];
        if index >= w.len() {
            return Err(EmdError::LengthMismatch {
                weights: index + 1,
                grid: w.len(),
            });
        }
        w[index] = 1.0;
        Self::new(w, grid)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.mass() - 1.0).abs() <= NORMALIZATION_TOL
    }

    fn require_normalized(&self) -> Result<(), EmdError> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(EmdError::NotNormalized(self.mass()))
        }
    }
}

/// Rescales `f` to unit ℓ₁ norm.
pub fn normalize_l1(f: &SourceVector) -> Result<SourceVector, EmdError> {
    let mass = f.mass();
    if mass <= 0.0 {
        return Err(EmdError::ZeroMass);
    }
    let weights = f.weights.iter().map(|w| w / mass).collect();
    SourceVector::new(weights, f.grid.clone())
}

/// Pairwise distances between source locations.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundMetric {
    d: DMatrix<f64>,
}

impl GroundMetric {
    /// Validates symmetry, zero diagonal, finiteness and (for `n ≤ 64`) the
    /// triangle inequality.
    pub fn new(d: DMatrix<f64>) -> Result<Self, EmdError> {
        let n = d.nrows();
        if n == 0 || d.ncols() != n {
            return Err(EmdError::InvalidMetric(format!(
                "expected a nonempty square matrix, got {}x{}",
                d.nrows(),
                d.ncols()
            )));
        }
        let scale = d.amax().max(1.0);
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(EmdError::InvalidMetric(format!("d({i},{i}) != 0")));
            }
            for j in 0..n {
                let v = d[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(EmdError::InvalidMetric(format!("d({i},{j}) = {v}")));
                }
                if (v - d[(j, i)]).abs() > 1e-12 * scale {
                    return Err(EmdError::InvalidMetric(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        if n <= TRIANGLE_CHECK_MAX_N {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if d[(i, j)] > d[(i, k)] + d[(k, j)] + 1e-12 * scale {
                            return Err(EmdError::InvalidMetric(format!(
                                "triangle inequality fails for ({i},{k},{j})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self { d })
    }

    /// `|x_i − x_j|` for points on a line.
    pub fn line(positions: &[f64]) -> Result<Self, EmdError> {
        let n = positions.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| (positions[i] - positions[j]).abs()))
    }

    pub fn len(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn diameter(&self) -> f64 {
        self.d.max()
    }
}

/// How edge lengths are measured by [`shortest_path_metric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PathLength {
    /// Every edge with positive weight has length 1.
    #[default]
    Hops,
    /// An edge of weight `w` has length `1 / w`.
    InverseWeight,
}

/// All-pairs shortest-path distances over edges with `W_ij > 0`.
pub fn shortest_path_metric(g: &Graph, length: PathLength) -> Result<GroundMetric, EmdError> {
    let n = g.len();
    let w = g.weights();
    let mut d = DMatrix::from_element(n, n, f64::INFINITY);
    match length {
        PathLength::Hops => {
            let adj: Vec<Vec<usize>> = (0..n)
                .map(|i| (0..n).filter(|&j| j != i && w[(i, j)] > 0.0).collect())
                .collect();
            for s in 0..n {
                d[(s, s)] = 0.0;
                let mut queue = VecDeque::from([s]);
                while let Some(u) = queue.pop_front() {
                    for &v in &adj[u] {
                        if d[(s, v)].is_infinite() {
                            d[(s, v)] = d[(s, u)] + 1.0;
                            queue.push_back(v);
                        }
                    }
                }
            }
        }
        PathLength::InverseWeight => {
            // dense Dijkstra from every source
            for s in 0..n {
                let mut done = vec![false; n];
                d[(s, s)] = 0.0;
                for _ in 0..n {
                    let u = (0..n)
                        .filter(|&u| !done[u])
                        .min_by(|&a, &b| d[(s, a)].total_cmp(&d[(s, b)]));
                    let Some(u) = u else { break };
                    if d[(s, u)].is_infinite() {
                        break;
                    }
                    done[u] = true;
                    for v in 0..n {
                        if v != u && w[(u, v)] > 0.0 {
                            let cand = d[(s, u)] + 1.0 / w[(u, v)];
                            if cand < d[(s, v)] {
                                d[(s, v)] = cand;
                            }
                        }
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if d[(i, j)].is_infinite() {
                return Err(EmdError::Disconnected(i, j));
            }
        }
    }
    // Dijkstra sums can differ in the last ulp between (i,j) and (j,i)
    let d = (&d + d.transpose()) * 0.5;
    GroundMetric::new(d)
}

/// Closed-form EMD on a line: `Σ_i |P_i − Q_i| (x_{i+1} − x_i)`.
pub fn emd_line(p: &SourceVector, q: &SourceVector) -> Result<f64, EmdError> {
    if p.grid != q.grid {
        return Err(EmdError::GridMismatch);
    }
    let x = p.grid.positions().ok_or(EmdError::UnsortedGrid)?;
    if x.windows(2).any(|w| w[1] < w[0]) {
        return Err(EmdError::UnsortedGrid);
    }
    p.require_normalized()?;
    q.require_normalized()?;
    let mut cum_p = 0.0;
    let mut cum_q = 0.0;
    let mut total = 0.0;
    for i in 0..x.len().saturating_sub(1) {
        cum_p += p.weights[i];
        cum_q += q.weights[i];
        total += (cum_p - cum_q).abs() * (x[i + 1] - x[i]);
    }
    Ok(total)
}

/// Optimal transport plan between two unit-mass vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    /// `plan[(i, j)]` is the mass moved from location `i` to location `j`.
    pub plan: DMatrix<f64>,
    pub total_mass: f64,
    /// Primal objective minus a certified dual lower bound.
    pub duality_gap: f64,
}

impl Flow {
    /// Largest violation of the EMD flow constraints.
    pub fn constraint_violation(&self, p: &SourceVector, q: &SourceVector) -> f64 {
        let n = self.plan.nrows();
        let mut worst = (self.plan.sum() - 1.0).abs();
        for i in 0..n {
            worst = worst.max((-self.plan.row(i).min()).max(0.0));
            worst = worst.max(self.plan.row(i).sum() - p.weights[i]);
            worst = worst.max(self.plan.column(i).sum() - q.weights[i]);
        }
        worst
    }
}

/// Exact EMD over a general ground metric.
///
/// Solves the balanced transportation problem restricted to the supports of
/// `p` and `q` with successive shortest paths (Dijkstra on reduced costs).
/// On termination the node potentials are turned into a feasible dual via a
/// c-transform; the primal/dual gap must be within [`DUALITY_GAP_TOL`].
pub fn emd_flow(
    p: &SourceVector,
    q: &SourceVector,
    d: &GroundMetric,
) -> Result<(Flow, f64), EmdError> {
    let n = p.len();
    if q.len() != n {
        return Err(EmdError::GridMismatch);
    }
    if d.len() != n {
        return Err(EmdError::InvalidMetric(format!(
            "metric has {} points, vectors have {n}",
            d.len()
        )));
    }
    p.require_normalized()?;
    q.require_normalized()?;

    let src: Vec<usize> = (0..n).filter(|&i| p.weights[i] > 0.0).collect();
    let dst: Vec<usize> = (0..n).filter(|&j| q.weights[j] > 0.0).collect();
    let (a, b) = (src.len(), dst.len());
    let cost = |i: usize, j: usize| d.get(src[i], dst[j]);

    let mut supply: Vec<f64> = src.iter().map(|&i| p.weights[i]).collect();
    let mut demand: Vec<f64> = dst.iter().map(|&j| q.weights[j]).collect();
    let mut flow = vec![0.0; a * b];
    // potentials: 0..a are sources, a..a+b are sinks
    let mut pot = vec![0.0; a + b];

    let total = p.mass().min(q.mass());
    let stop = 1e-15;
    let max_rounds = 16 * (a + b) * (a + b) + 64;
    let mut rounds = 0;

    while supply.iter().sum::<f64>() > stop && demand.iter().sum::<f64>() > stop {
        rounds += 1;
        if rounds > max_rounds {
            return Err(EmdError::SolverFailure(format!(
                "no convergence after {max_rounds} augmentations"
            )));
        }
        let mut dist = vec![f64::INFINITY; a + b];
        let mut prev = vec![usize::MAX; a + b];
        let mut done = vec![false; a + b];
        for i in 0..a {
            if supply[i] > 0.0 {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (v, &dv) in dist.iter().enumerate() {
                if !done[v] && dv < best {
                    best = dv;
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < a {
                for j in 0..b {
                    let rc = (cost(u, j) + pot[u] - pot[a + j]).max(0.0);
                    if dist[u] + rc < dist[a + j] {
                        dist[a + j] = dist[u] + rc;
                        prev[a + j] = u;
                    }
                }
            } else {
                let j = u - a;
                for i in 0..a {
                    if flow[i * b + j] > 0.0 {
                        let rc = (-cost(i, j) + pot[u] - pot[i]).max(0.0);
                        if dist[u] + rc < dist[i] {
                            dist[i] = dist[u] + rc;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        let target = (0..b)
            .filter(|&j| demand[j] > 0.0 && dist[a + j].is_finite())
            .min_by(|&x, &y| dist[a + x].total_cmp(&dist[a + y]))
            .ok_or_else(|| EmdError::SolverFailure("no augmenting path".into()))?;
        let cap = dist[a + target];
        for (v, pv) in pot.iter_mut().enumerate() {
            *pv += dist[v].min(cap);
        }

        // walk back to find the bottleneck
        let mut delta = demand[target];
        let mut v = a + target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= a {
                // reverse arc sink u -> source v
                delta = delta.min(flow[v * b + (u - a)]);
            }
            v = u;
        }
        let origin = v;
        delta = delta.min(supply[origin]);
        if delta <= 0.0 {
            return Err(EmdError::SolverFailure("zero-capacity augmenting path".into()));
        }

        let mut v = a + target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < a {
                flow[u * b + (v - a)] += delta;
            } else {
                let cell = &mut flow[v * b + (u - a)];
                *cell -= delta;
                if *cell < 1e-18 {
                    *cell = 0.0;
                }
            }
            v = u;
        }
        supply[origin] -= delta;
        demand[target] -= delta;
        if supply[origin] < 1e-18 {
            supply[origin] = 0.0;
        }
        if demand[target] < 1e-18 {
            demand[target] = 0.0;
        }
    }

    let mut plan = DMatrix::zeros(n, n);
    let mut primal = 0.0;
    for i in 0..a {
        for j in 0..b {
            let f = flow[i * b + j];
            plan[(src[i], dst[j])] = f;
            primal += f * cost(i, j);
        }
    }

    // Dual: max Σ q_j v_j − Σ p_i u_i  s.t.  v_j − u_i ≤ d_ij.
    // Take u = source potentials and v_j = min_i (d_ij + u_i) (c-transform),
    // which is feasible by construction.
    let u: Vec<f64> = pot[..a].to_vec();
    let dual: f64 = (0..b)
        .map(|j| {
            let vj = (0..a)
                .map(|i| cost(i, j) + u[i])
                .fold(f64::INFINITY, f64::min);
            q.weights[dst[j]] * vj
        })
        .sum::<f64>()
        - (0..a).map(|i| p.weights[src[i]] * u[i]).sum::<f64>();
    let gap = (primal - dual).max(0.0);
    if gap > DUALITY_GAP_TOL {
        return Err(EmdError::SolverFailure(format!("duality gap {gap:e}")));
    }
    let flow = Flow {
        plan,
        total_mass: total,
        duality_gap: gap,
    };
    Ok((flow, primal))
}

/// EMD after scaling both vectors to unit mass, on a unit-interval style grid.
pub fn normalized_emd_line(f: &SourceVector, g: &SourceVector) -> Result<f64, EmdError> {
    emd_line(&normalize_l1(f)?, &normalize_l1(g)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn line(n: usize) -> Grid {
        Grid::unit_interval(n)
    }

    #[test]
    fn normalize_examples() {
        let f = SourceVector::on_unit_interval(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(normalize_l1(&f).unwrap().weights(), &[0.5, 0.5, 0.0, 0.0]);

        let f = SourceVector::on_unit_interval(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(normalize_l1(&f).unwrap().weights(), &[0.0, 0.0, 1.0, 0.0]);

        let f = SourceVector::on_unit_interval(vec![0.2, 0.6]).unwrap();
        let g = normalize_l1(&f).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!(close(s, 1.0, 1e-12));
        assert!(close(g.weights()[0], 0.25, 1e-15));
        assert!(close(g.weights()[1], 0.75, 1e-15));
    }

    #[test]
    fn normalize_rejects_zero_mass() {
        let f = SourceVector::on_unit_interval(vec![0.0; 3]).unwrap();
        assert_eq!(normalize_l1(&f), Err(EmdError::ZeroMass));
    }

    #[test]
    fn construction_rejects_out_of_range() {
        assert!(matches!(
            SourceVector::on_unit_interval(vec![0.5, 1.5]),
            Err(EmdError::WeightOutOfRange { index: 1, .. })
        ));
        assert!(SourceVector::on_unit_interval(vec![f64::NAN]).is_err());
        assert_eq!(
            SourceVector::new(vec![], Grid::Nodes(0)),
            Err(EmdError::EmptyGrid)
        );
    }

    #[test]
    fn line_identical_is_zero() {
        let p = SourceVector::on_unit_interval(vec![0.25; 4]).unwrap();
        assert_eq!(emd_line(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn line_single_atoms() {
        let g = line(10);
        let x = g.positions().unwrap().to_vec();
        for (i, j) in [(0, 9), (3, 4), (7, 2)] {
            let p = SourceVector::atom(i, g.clone()).unwrap();
            let q = SourceVector::atom(j, g.clone()).unwrap();
            assert!(close(emd_line(&p, &q).unwrap(), (x[i] - x[j]).abs(), 1e-15));
        }
    }

    #[test]
    fn line_rejects_unnormalized_and_mismatch() {
        let p = SourceVector::on_unit_interval(vec![0.5, 0.0]).unwrap();
        let q = SourceVector::on_unit_interval(vec![0.0, 1.0]).unwrap();
        assert!(matches!(emd_line(&p, &q), Err(EmdError::NotNormalized(_))));
        let r = SourceVector::on_unit_interval(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(emd_line(&q, &r), Err(EmdError::GridMismatch));
        let nodes = SourceVector::on_nodes(vec![0.0, 1.0]).unwrap();
        assert_eq!(emd_line(&nodes, &nodes), Err(EmdError::UnsortedGrid));
    }

    #[test]
    fn line_nonuniform_grid() {
        let g = Grid::Interval(vec![0.0, 0.1, 0.5, 2.0]);
        let p = SourceVector::new(vec![1.0, 0.0, 0.0, 0.0], g.clone()).unwrap();
        let q = SourceVector::new(vec![0.0, 0.0, 0.5, 0.5], g).unwrap();
        // 0.5 * 0.5 + 0.5 * 2.0
        assert!(close(emd_line(&p, &q).unwrap(), 1.25, 1e-15));
    }

    #[test]
    fn flow_identical_is_diagonal() {
        let p = SourceVector::on_unit_interval(vec![0.2, 0.3, 0.5]).unwrap();
        let d = GroundMetric::line(p.grid().positions().unwrap()).unwrap();
        let (flow, cost) = emd_flow(&p, &p, &d).unwrap();
        assert!(close(cost, 0.0, 1e-15));
        for i in 0..3 {
            assert!(close(flow.plan[(i, i)], p.weights()[i], 1e-15));
        }
        assert!(flow.constraint_violation(&p, &p) < 1e-12);
    }

    #[test]
    fn flow_two_point_forced_transport() {
        let d = GroundMetric::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let p = SourceVector::on_nodes(vec![1.0, 0.0]).unwrap();
        let q = SourceVector::on_nodes(vec![0.0, 1.0]).unwrap();
        let (flow, cost) = emd_flow(&p, &q, &d).unwrap();
        assert_eq!(cost, 1.0);
        assert_eq!(flow.plan[(0, 1)], 1.0);
    }

    #[test]
    fn metric_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(GroundMetric::new(bad).is_err());
        let tri = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0]);
        assert!(GroundMetric::new(tri).is_err());
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(GroundMetric::new(diag).is_err());
    }

    #[test]
    fn mass_move_identity() {
        let g = line(20);
        let x = g.positions().unwrap().to_vec();
        let d = GroundMetric::line(&x).unwrap();
        let p = SourceVector::atom(5, g.clone()).unwrap();
        for (w, to) in [(0.3, 12), (0.75, 0), (1.0, 19)] {
            let mut wq = vec![0.0; 20];
            wq[5] = 1.0 - w;
            wq[to] += w;
            let q = SourceVector::new(wq, g.clone()).unwrap();
            let expect = w * (x[5] - x[to]).abs();
            assert!(close(emd_flow(&p, &q, &d).unwrap().1, expect, 1e-12));
            assert!(close(emd_line(&p, &q).unwrap(), expect, 1e-12));
        }
    }

    #[test]
    fn path_and_complete_graph_metrics() {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let g = crate::diffusion::graph_laplacian(&w).unwrap();
        let d = shortest_path_metric(&g, PathLength::Hops).unwrap();
        assert_eq!(d.get(0, 2), 2.0);
        assert_eq!(d.get(0, 1), 1.0);

        let k4 = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        let g = crate::diffusion::graph_laplacian(&k4).unwrap();
        let d = shortest_path_metric(&g, PathLength::Hops).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn weighted_path_metric() {
        // 0 -(w=4)- 1 -(w=4)- 2, plus 0 -(w=1)- 2
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 4.0, 1.0, 4.0, 0.0, 4.0, 1.0, 4.0, 0.0]);
        let g = crate::diffusion::graph_laplacian(&w).unwrap();
        let hops = shortest_path_metric(&g, PathLength::Hops).unwrap();
        assert_eq!(hops.get(0, 2), 1.0);
        let inv = shortest_path_metric(&g, PathLength::InverseWeight).unwrap();
        assert!(close(inv.get(0, 2), 0.5, 1e-15));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let g = crate::diffusion::graph_laplacian(&w).unwrap();
        assert!(matches!(
            shortest_path_metric(&g, PathLength::Hops),
            Err(EmdError::Disconnected(_, _))
        ));
    }
}
