//! Latent position recovery from the adjacency matrix.
//!
//! `recover_sp` embeds shortest-path hop counts with classical MDS;
//! `recover_spectral` first denoises the adjacency by a truncated eigen
//! expansion, thresholds it, and then runs the shortest-path recovery.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{symmetric_eigen, DenseMatrix};
use crate::model::{is_connected, Graph, Positions};

#[derive(Debug, Error, PartialEq)]
pub enum RecoveryError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("thresholded graph is disconnected at q = {q}")]
    DisconnectedThreshold { q: f64 },
    #[error("distance matrix has an infinite or non-finite entry at ({0}, {1})")]
    InfiniteDistance(usize, usize),
    #[error("distance matrix must be square and symmetric")]
    NotSymmetric,
    #[error("embedding dimension must be at least 1")]
    InvalidDimension,
    #[error("eigenvalue list is empty")]
    EmptySpectrum,
    #[error("invalid spectral configuration: q = {q}, rho0 = {rho0}")]
    InvalidConfig { q: f64, rho0: f64 },
    #[error("estimate has zero variance and cannot be aligned")]
    ZeroVariance,
    #[error("alignment is only defined for univariate positions, got dimension {0}")]
    NotUnivariate(usize),
    #[error("count mismatch: expected {expected}, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for {len} positions")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, RecoveryError>;

/// All-pairs hop counts; `None` between different components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopDistanceMatrix {
    n: usize,
    hops: Vec<u32>,
}

impl HopDistanceMatrix {
    const UNREACHABLE: u32 = u32::MAX;

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        let h = self.hops[i * self.n + j];
        (h != Self::UNREACHABLE).then_some(h)
    }

    pub fn is_finite(&self) -> bool {
        self.hops.iter().all(|&h| h != Self::UNREACHABLE)
    }

    /// Real-valued copy with `f64::INFINITY` for unreachable pairs.
    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| {
            self.get(i, j).map_or(f64::INFINITY, f64::from)
        })
    }
}

/// Floyd-Warshall on unit edge weights.
pub fn floyd_warshall(graph: &Graph) -> HopDistanceMatrix {
    let n = graph.n_nodes();
    let inf = HopDistanceMatrix::UNREACHABLE;
    let mut hops = vec![inf; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                hops[i * n + j] = 0;
            } else if graph.has_edge(i, j) {
                hops[i * n + j] = 1;
            }
        }
    }
    let mut pivot = vec![0u32; n];
    for k in 0..n {
        pivot.copy_from_slice(&hops[k * n..(k + 1) * n]);
        for i in 0..n {
            let dik = hops[i * n + k];
            if dik == inf {
                continue;
            }
            let row = &mut hops[i * n..(i + 1) * n];
            for (dij, &dkj) in row.iter_mut().zip(&pivot) {
                *dij = (*dij).min(dik.saturating_add(dkj));
            }
        }
    }
    HopDistanceMatrix { n, hops }
}

/// Which procedure produced a [`PositionEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryAlgorithm {
    ClassicalMds,
    ShortestPath,
    Spectral,
}

/// Thresholding and eigenvalue tolerance of the spectral recovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    pub q: f64,
    pub rho0: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { q: 0.9, rho0: 0.01 }
    }
}

impl SpectralConfig {
    pub fn new(q: f64, rho0: f64) -> Result<Self> {
        let cfg = Self { q, rho0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q > 0.0 && self.q < 1.0 && self.rho0 >= 0.0 && self.rho0.is_finite() {
            Ok(())
        } else {
            Err(RecoveryError::InvalidConfig {
                q: self.q,
                rho0: self.rho0,
            })
        }
    }
}

/// Recovered positions, one per node.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionEstimate {
    pub positions: Positions,
    pub algorithm: RecoveryAlgorithm,
    pub spectral: Option<SpectralConfig>,
    /// Number of eigenpairs kept by the spectral denoising.
    pub rank: Option<usize>,
}

/// Estimated distances from the regression node to every other node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub values: Vec<f64>,
}

/// Classical MDS embedding of a finite symmetric distance matrix.
pub fn classical_mds(dist: &DenseMatrix, dim: usize) -> Result<PositionEstimate> {
    if dim == 0 {
        return Err(RecoveryError::InvalidDimension);
    }
    let n = dist.rows();
    if dist.cols() != n {
        return Err(RecoveryError::NotSymmetric);
    }
    for i in 0..n {
        for j in 0..n {
            if !dist[(i, j)].is_finite() {
                return Err(RecoveryError::InfiniteDistance(i, j));
            }
        }
    }
    if !dist.is_symmetric(0.0) {
        return Err(RecoveryError::NotSymmetric);
    }
    let sq = DenseMatrix::from_fn(n, n, |i, j| dist[(i, j)] * dist[(i, j)]);
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let gram = DenseMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand));
    let eig = symmetric_eigen(&gram);
    let mut coords = vec![0.0; n * dim];
    for k in 0..dim.min(n) {
        let scale = eig.values[k].max(0.0).sqrt();
        for i in 0..n {
            coords[i * dim + k] = eig.vectors[k][i] * scale;
        }
    }
    Ok(PositionEstimate {
        positions: Positions::new(dim, coords),
        algorithm: RecoveryAlgorithm::ClassicalMds,
        spectral: None,
        rank: None,
    })
}

/// Affine map of every coordinate onto `[0, 1]`; constant coordinates map to 0.
fn normalize_unit_range(positions: &mut Positions) {
    let dim = positions.dim();
    let n = positions.len();
    let coords = positions.coords_mut();
    for k in 0..dim {
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = coords[i * dim + k];
            (lo.min(v), hi.max(v))
        });
        let range = hi - lo;
        for i in 0..n {
            let v = &mut coords[i * dim + k];
            *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
        }
    }
}

/// Shortest-path recovery: hop counts, classical MDS, unit-range normalisation.
pub fn recover_sp(graph: &Graph, dim: usize) -> Result<PositionEstimate> {
    if dim == 0 {
        return Err(RecoveryError::InvalidDimension);
    }
    let hops = floyd_warshall(graph);
    if !hops.is_finite() {
        return Err(RecoveryError::Disconnected);
    }
    let mut est = classical_mds(&hops.to_matrix(), dim)?;
    normalize_unit_range(&mut est.positions);
    est.algorithm = RecoveryAlgorithm::ShortestPath;
    Ok(est)
}

/// Number of eigenvalues strictly above `-(1 + rho0) * smallest`; zero when
/// the spectrum vanishes.
pub fn spectral_rank(eigenvalues: &[f64], rho0: f64) -> Result<usize> {
    let smallest = *eigenvalues.last().ok_or(RecoveryError::EmptySpectrum)?;
    let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 1e-12 {
        return Ok(0);
    }
    let threshold = -(1.0 + rho0) * smallest;
    Ok(eigenvalues.iter().filter(|&&s| s > threshold).count())
}

/// Low-rank approximation of the adjacency matrix.
#[derive(Debug, Clone)]
pub struct DenoisedAdjacency {
    pub matrix: DenseMatrix,
    pub rank: usize,
    /// Full spectrum of the adjacency, descending.
    pub eigenvalues: Vec<f64>,
}

fn adjacency_matrix(graph: &Graph) -> DenseMatrix {
    let n = graph.n_nodes();
    DenseMatrix::from_fn(n, n, |i, j| if graph.has_edge(i, j) { 1.0 } else { 0.0 })
}

fn truncated_expansion(graph: &Graph, rank: Option<usize>, rho0: f64) -> Result<DenoisedAdjacency> {
    let n = graph.n_nodes();
    let eig = symmetric_eigen(&adjacency_matrix(graph));
    let r = match rank {
        Some(r) => r.min(n),
        None => spectral_rank(&eig.values, rho0)?,
    };
    // row i of `scaled` is (sigma_k v_k[i])_k, row j of `plain` is (v_k[j])_k
    let scaled: Vec<f64> = (0..n)
        .flat_map(|i| (0..r).map(move |k| (i, k)))
        .map(|(i, k)| eig.values[k] * eig.vectors[k][i])
        .collect();
    let plain: Vec<f64> = (0..n)
        .flat_map(|i| (0..r).map(move |k| (i, k)))
        .map(|(i, k)| eig.vectors[k][i])
        .collect();
    let mut matrix = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let a = &scaled[i * r..(i + 1) * r];
        for j in i..n {
            let b = &plain[j * r..(j + 1) * r];
            let v: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(DenoisedAdjacency {
        matrix,
        rank: r,
        eigenvalues: eig.values,
    })
}

/// Truncated eigen expansion of the adjacency at the rank chosen by [`spectral_rank`].
pub fn denoise_adjacency(graph: &Graph, rho0: f64) -> Result<DenoisedAdjacency> {
    if graph.n_nodes() == 0 {
        return Err(RecoveryError::EmptySpectrum);
    }
    truncated_expansion(graph, None, rho0)
}

/// Truncated eigen expansion keeping exactly the top `rank` eigenpairs.
pub fn denoise_adjacency_with_rank(graph: &Graph, rank: usize) -> Result<DenoisedAdjacency> {
    if graph.n_nodes() == 0 {
        return Err(RecoveryError::EmptySpectrum);
    }
    truncated_expansion(graph, Some(rank), 0.0)
}

/// Graph with an edge wherever the off-diagonal entry strictly exceeds `q`.
pub fn threshold_adjacency(matrix: &DenseMatrix, q: f64) -> Graph {
    Graph::from_fn(matrix.rows(), |i, j| matrix[(i, j)] > q)
}

fn recover_from_denoised(denoised: DenoisedAdjacency, cfg: SpectralConfig, dim: usize) -> Result<PositionEstimate> {
    let thresholded = threshold_adjacency(&denoised.matrix, cfg.q);
    if !is_connected(&thresholded) {
        return Err(RecoveryError::DisconnectedThreshold { q: cfg.q });
    }
    let mut est = recover_sp(&thresholded, dim)?;
    est.algorithm = RecoveryAlgorithm::Spectral;
    est.spectral = Some(cfg);
    est.rank = Some(denoised.rank);
    Ok(est)
}

/// Spectral recovery: denoise, threshold at `q`, then shortest-path recovery.
pub fn recover_spectral(graph: &Graph, cfg: SpectralConfig, dim: usize) -> Result<PositionEstimate> {
    cfg.validate()?;
    if dim == 0 {
        return Err(RecoveryError::InvalidDimension);
    }
    recover_from_denoised(denoise_adjacency(graph, cfg.rho0)?, cfg, dim)
}

/// Spectral recovery with a fixed number of retained eigenpairs.
pub fn recover_spectral_with_rank(
    graph: &Graph,
    q: f64,
    rank: usize,
    dim: usize,
) -> Result<PositionEstimate> {
    let cfg = SpectralConfig { q, rho0: 0.0 };
    cfg.validate()?;
    if dim == 0 {
        return Err(RecoveryError::InvalidDimension);
    }
    recover_from_denoised(denoise_adjacency_with_rank(graph, rank)?, cfg, dim)
}

/// Least-squares affine alignment of a univariate estimate onto the truth,
/// sign flip included. For error reporting only.
pub fn align_1d(estimate: &PositionEstimate, truth: &Positions) -> Result<PositionEstimate> {
    let est = &estimate.positions;
    for d in [est.dim(), truth.dim()] {
        if d != 1 {
            return Err(RecoveryError::NotUnivariate(d));
        }
    }
    if est.len() != truth.len() {
        return Err(RecoveryError::CountMismatch {
            expected: truth.len(),
            got: est.len(),
        });
    }
    let (e, t) = (est.coords(), truth.coords());
    let n = e.len() as f64;
    let (me, mt) = (e.iter().sum::<f64>() / n, t.iter().sum::<f64>() / n);
    let var: f64 = e.iter().map(|x| (x - me).powi(2)).sum();
    if !(var > 0.0) {
        return Err(RecoveryError::ZeroVariance);
    }
    let cov: f64 = e.iter().zip(t).map(|(x, y)| (x - me) * (y - mt)).sum();
    let slope = cov / var;
    Ok(PositionEstimate {
        positions: Positions::from_1d(e.iter().map(|x| mt + slope * (x - me)).collect()),
        ..estimate.clone()
    })
}

/// Distances from position `query` to every other position, in index order.
pub fn distances_from_positions(positions: &Positions, query: usize) -> Result<DistanceEstimate> {
    if query >= positions.len() {
        return Err(RecoveryError::IndexOutOfRange {
            index: query,
            len: positions.len(),
        });
    }
    Ok(DistanceEstimate {
        values: (0..positions.len())
            .filter(|&i| i != query)
            .map(|i| positions.distance(i, query))
            .collect(),
    })
}

/// Sup-norm error between estimated and true distances.
pub fn distance_error_delta(estimated: &DistanceEstimate, truth: &DistanceEstimate) -> Result<f64> {
    if estimated.values.len() != truth.values.len() {
        return Err(RecoveryError::CountMismatch {
            expected: truth.values.len(),
            got: estimated.values.len(),
        });
    }
    Ok(estimated
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Twice the largest position error over all nodes.
pub fn position_error_d(aligned: &Positions, truth: &Positions) -> Result<f64> {
    if aligned.len() != truth.len() || aligned.dim() != truth.dim() {
        return Err(RecoveryError::CountMismatch {
            expected: truth.len(),
            got: aligned.len(),
        });
    }
    Ok(2.0
        * (0..truth.len())
            .map(|i| crate::model::euclidean(aligned.point(i), truth.point(i)))
            .fold(0.0, f64::max))
}
