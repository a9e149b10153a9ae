//! Latent position model: densities, link kernels, graphs and labels.
//!
//! Nodes `0..n` are the labelled nodes and node `n` (the last column of the
//! latent sample) is the regression node, which never receives a label.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("invalid link kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid regression function: {0}")]
    InvalidRegression(String),
    #[error("invalid noise: {0}")]
    InvalidNoise(String),
    #[error("need at least 2 positions, got {0}")]
    TooFewPositions(usize),
    #[error("position {index} lies outside the support of the density")]
    OutsideSupport { index: usize },
    #[error("node {index} out of range for a graph with {n_nodes} nodes")]
    NodeOutOfRange { index: usize, n_nodes: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma_half_integer(h + 1.0)
}

// Gamma at positive integers and half integers, which is all the ball volume needs.
fn gamma_half_integer(x: f64) -> f64 {
    if (x - 1.0).abs() < 1e-12 {
        1.0
    } else if (x - 0.5).abs() < 1e-12 {
        PI.sqrt()
    } else {
        (x - 1.0) * gamma_half_integer(x - 1.0)
    }
}

/// Shape of the latent density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityKind {
    /// Uniform on the box `prod [lower_k, upper_k]`.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// Product of independent normals.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

/// Latent density `p` plus the optional constants used by the risk bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec {
    pub kind: DensityKind,
    /// Lower bound `p0` on the support; defaults to the exact value for uniform boxes.
    pub p0: Option<f64>,
    /// Hölder exponent `b` of the density.
    pub holder_b: Option<f64>,
    /// Hölder constant `S` of the density.
    pub holder_s: Option<f64>,
}

impl DensitySpec {
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::from_kind(DensityKind::Uniform { lower, upper })
    }

    /// Uniform on `[0, 1]`.
    pub fn unit_interval() -> Self {
        Self::uniform(vec![0.0], vec![1.0]).expect("valid box")
    }

    pub fn gaussian(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        Self::from_kind(DensityKind::Gaussian { mean, std })
    }

    pub fn from_kind(kind: DensityKind) -> Result<Self> {
        let spec = Self {
            kind,
            p0: None,
            holder_b: None,
            holder_s: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            DensityKind::Uniform { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(ModelError::InvalidDensity(
                        "box bounds must be non-empty and of equal length".into(),
                    ));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
                    return Err(ModelError::InvalidDensity(
                        "box bounds need finite lower < upper".into(),
                    ));
                }
            }
            DensityKind::Gaussian { mean, std } => {
                if mean.is_empty() || mean.len() != std.len() {
                    return Err(ModelError::InvalidDensity(
                        "mean and std must be non-empty and of equal length".into(),
                    ));
                }
                if std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return Err(ModelError::InvalidDensity("std must be positive".into()));
                }
            }
        }
        if let Some(p0) = self.p0 {
            if !(p0 > 0.0) {
                return Err(ModelError::InvalidDensity("p0 must be positive".into()));
            }
        }
        if let Some(b) = self.holder_b {
            if !(b > 0.0 && b <= 1.0) {
                return Err(ModelError::InvalidDensity("holder b must lie in (0, 1]".into()));
            }
        }
        if let Some(s) = self.holder_s {
            if !(s > 0.0) {
                return Err(ModelError::InvalidDensity("holder S must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DensityKind::Uniform { lower, .. } => lower.len(),
            DensityKind::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Uniform { lower, upper } => {
                if self.contains(x) {
                    1.0 / lower.iter().zip(upper).map(|(l, u)| u - l).product::<f64>()
                } else {
                    0.0
                }
            }
            DensityKind::Gaussian { mean, std } => x
                .iter()
                .zip(mean.iter().zip(std))
                .map(|(xi, (m, s))| {
                    let z = (xi - m) / s;
                    (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
                })
                .product(),
        }
    }

    /// Whether `x` lies in the support `Q`.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match &self.kind {
            DensityKind::Uniform { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(xi, (l, u))| *l <= *xi && *xi <= *u),
            DensityKind::Gaussian { .. } => x.iter().all(|v| v.is_finite()),
        }
    }

    /// `inf p` over the support, where such a bound exists.
    pub fn lower_bound(&self) -> Option<f64> {
        self.p0.or(match &self.kind {
            DensityKind::Uniform { lower, upper } => {
                Some(1.0 / lower.iter().zip(upper).map(|(l, u)| u - l).product::<f64>())
            }
            DensityKind::Gaussian { .. } => None,
        })
    }

    /// `∫ p^{1/2}`. Closed form for both supported kinds.
    pub fn sqrt_density_integral(&self) -> f64 {
        match &self.kind {
            DensityKind::Uniform { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| u - l).product::<f64>().sqrt()
            }
            DensityKind::Gaussian { std, .. } => std
                .iter()
                .map(|s| 2.0 * s * PI.sqrt() * (2.0 * PI * s * s).powf(-0.25))
                .product(),
        }
    }

    /// Per-coordinate interval outside of which the density is zero or negligible.
    pub fn effective_bounds(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            DensityKind::Uniform { lower, upper } => {
                lower.iter().copied().zip(upper.iter().copied()).collect()
            }
            DensityKind::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| (m - 10.0 * s, m + 10.0 * s))
                .collect(),
        }
    }

    pub fn sample_point(&self, rng: &mut seed::Rng) -> Vec<f64> {
        match &self.kind {
            DensityKind::Uniform { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.gen::<f64>())
                .collect(),
            DensityKind::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| Normal::new(*m, *s).expect("validated std").sample(rng))
                .collect(),
        }
    }
}

/// Profile `K` of the radial link function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelProfile {
    /// `K(t) = exp(-t^2)`.
    Gaussian,
    /// `K(t) = 1[t <= 1]`.
    Box,
    /// `K(t) = exp(-t^2) 1[t <= 2]`.
    TruncatedGaussian,
}

impl KernelProfile {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            KernelProfile::Gaussian => (-t * t).exp(),
            KernelProfile::Box => {
                if t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelProfile::TruncatedGaussian => {
                if t <= 2.0 {
                    (-t * t).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Radius `M1` with `K >= 1/2` on `[0, M1]`.
    pub fn m1(self) -> f64 {
        match self {
            KernelProfile::Box => 1.0,
            KernelProfile::Gaussian | KernelProfile::TruncatedGaussian => std::f64::consts::LN_2.sqrt(),
        }
    }

    /// Radius `M2` beyond which `K` vanishes; infinite for the gaussian.
    pub fn m2(self) -> f64 {
        match self {
            KernelProfile::Box => 1.0,
            KernelProfile::TruncatedGaussian => 2.0,
            KernelProfile::Gaussian => f64::INFINITY,
        }
    }

    /// Radius beyond which `K` is zero or below double precision relevance.
    pub fn effective_support(self) -> f64 {
        match self {
            KernelProfile::Gaussian => 10.0,
            p => p.m2(),
        }
    }
}

/// Radial link `k(x, z) = alpha K(|x - z| / h_g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkKernel {
    pub profile: KernelProfile,
    pub alpha: f64,
    pub h_g: f64,
}

impl LinkKernel {
    pub fn new(profile: KernelProfile, alpha: f64, h_g: f64) -> Result<Self> {
        let link = Self { profile, alpha, h_g };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ModelError::InvalidKernel(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.h_g > 0.0) || !self.h_g.is_finite() {
            return Err(ModelError::InvalidKernel(format!(
                "h_g must be positive and finite, got {}",
                self.h_g
            )));
        }
        Ok(())
    }

    pub fn with_h_g(self, h_g: f64) -> Result<Self> {
        Self::new(self.profile, self.alpha, h_g)
    }

    /// Edge probability at latent distance `dist`.
    pub fn eval(&self, dist: f64) -> f64 {
        self.alpha * self.profile.eval(dist / self.h_g)
    }
}

/// Edge probability `alpha K(dist / h_g)` for `dist >= 0`.
pub fn kernel_eval(link: &LinkKernel, dist: f64) -> f64 {
    link.eval(dist)
}

/// Points in `R^d`, stored column-major (one contiguous slice per node).
#[derive(Debug, Clone, PartialEq)]
pub struct Positions {
    dim: usize,
    coords: Vec<f64>,
}

impl Positions {
    pub fn new(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        assert_eq!(coords.len() % dim, 0, "coordinate count not a multiple of dim");
        Self { dim, coords }
    }

    pub fn from_1d(xs: Vec<f64>) -> Self {
        Self::new(1, xs)
    }

    pub fn from_points<I, P>(dim: usize, points: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[f64]>,
    {
        let mut coords = Vec::new();
        for p in points {
            assert_eq!(p.as_ref().len(), dim);
            coords.extend_from_slice(p.as_ref());
        }
        Self { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Coordinate `k` of every point.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.points().map(|p| p[k]).collect()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Latent positions of all `n + 1` nodes; the last one is the regression node.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    positions: Positions,
    density: DensitySpec,
    seed: u64,
}

impl LatentSample {
    pub fn new(positions: Positions, density: DensitySpec, seed: u64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(ModelError::TooFewPositions(positions.len()));
        }
        if positions.dim() != density.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: density.dim(),
                got: positions.dim(),
            });
        }
        if let Some(index) = positions.points().position(|p| !density.contains(p)) {
            return Err(ModelError::OutsideSupport { index });
        }
        Ok(Self {
            positions,
            density,
            seed,
        })
    }

    /// `n` labelled positions drawn from `density` followed by the fixed regression point.
    pub fn with_query(density: &DensitySpec, n: usize, query: &[f64], seed: u64) -> Result<Self> {
        if n < 1 {
            return Err(ModelError::TooFewPositions(n + 1));
        }
        if query.len() != density.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: density.dim(),
                got: query.len(),
            });
        }
        let mut rng = seed::rng(seed);
        let mut coords = Vec::with_capacity((n + 1) * density.dim());
        for _ in 0..n {
            coords.extend(density.sample_point(&mut rng));
        }
        coords.extend_from_slice(query);
        Self::new(Positions::new(density.dim(), coords), density.clone(), seed)
    }

    pub fn positions(&self) -> &Positions {
        &self.positions
    }

    pub fn density(&self) -> &DensitySpec {
        &self.density
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }

    /// Number of labelled nodes `n` (total node count is `n + 1`).
    pub fn n(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    /// Index of the regression node.
    pub fn query_index(&self) -> usize {
        self.n()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.positions.point(i)
    }

    /// True latent distances `delta_i = |x_i - x_{n+1}|`, `i < n`.
    pub fn query_distances(&self) -> Vec<f64> {
        let q = self.query_index();
        (0..self.n()).map(|i| self.positions.distance(i, q)).collect()
    }
}

/// Draw `count` i.i.d. positions from `density`; the last is the regression node.
pub fn sample_positions(density: &DensitySpec, count: usize, seed: u64) -> Result<LatentSample> {
    density.validate()?;
    if count < 2 {
        return Err(ModelError::TooFewPositions(count));
    }
    let mut rng = seed::rng(seed);
    let mut coords = Vec::with_capacity(count * density.dim());
    for _ in 0..count {
        coords.extend(density.sample_point(&mut rng));
    }
    LatentSample::new(Positions::new(density.dim(), coords), density.clone(), seed)
}

/// Simple undirected graph: symmetric boolean adjacency with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_nodes: usize,
    adjacency: Vec<bool>,
    seed: u64,
}

impl Graph {
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            adjacency: vec![false; n_nodes * n_nodes],
            seed: 0,
        }
    }

    pub fn complete(n_nodes: usize) -> Self {
        Self::from_fn(n_nodes, |_, _| true)
    }

    /// Graph with an edge `{i, j}` (for `i < j`) wherever `edge(i, j)` holds.
    pub fn from_fn(n_nodes: usize, mut edge: impl FnMut(usize, usize) -> bool) -> Self {
        let mut g = Self::empty(n_nodes);
        for i in 0..n_nodes {
            for j in i + 1..n_nodes {
                if edge(i, j) {
                    g.set_edge(i, j);
                }
            }
        }
        g
    }

    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n_nodes);
        for &(i, j) in edges {
            for k in [i, j] {
                if k >= n_nodes {
                    return Err(ModelError::NodeOutOfRange { index: k, n_nodes });
                }
            }
            if i != j {
                g.set_edge(i, j);
            }
        }
        Ok(g)
    }

    fn set_edge(&mut self, i: usize, j: usize) {
        self.adjacency[i * self.n_nodes + j] = true;
        self.adjacency[j * self.n_nodes + i] = true;
    }

    pub(crate) fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n_nodes + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.adjacency[i * self.n_nodes..(i + 1) * self.n_nodes]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count() / 2
    }

    /// Edges `(i, j)` with `i < j` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_nodes).flat_map(move |i| {
            (i + 1..self.n_nodes)
                .filter(move |&j| self.has_edge(i, j))
                .map(move |j| (i, j))
        })
    }
}

/// Sample an LPM graph: one uniform per unordered pair, drawn in canonical
/// `(i < j)` order, and an edge wherever `U_ij <= k(x_i, x_j)`.
pub fn sample_graph(sample: &LatentSample, link: &LinkKernel, seed: u64) -> Graph {
    let pos = sample.positions();
    let n = pos.len();
    let mut rng = seed::rng(seed);
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            // U in (0, 1]: probability 0 never links and probability 1 always does.
            let u = 1.0 - rng.gen::<f64>();
            if u <= link.eval(pos.distance(i, j)) {
                g.set_edge(i, j);
            }
        }
    }
    g.with_seed(seed)
}

/// Number of neighbours of `node`.
pub fn empirical_degree(graph: &Graph, node: usize) -> Result<usize> {
    if node >= graph.n_nodes() {
        return Err(ModelError::NodeOutOfRange {
            index: node,
            n_nodes: graph.n_nodes(),
        });
    }
    Ok(graph.row(node).iter().filter(|&&e| e).count())
}

/// Whether the graph has a single connected component (breadth-first search).
pub fn is_connected(graph: &Graph) -> bool {
    let n = graph.n_nodes();
    if n <= 1 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(v) = queue.pop_front() {
        for w in graph.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    reached == n
}

/// Regression function `f` together with its Hölder and sup-norm constants.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFunction {
    pub kind: RegressionKind,
    /// Hölder exponent `a` in `(0, 1]`.
    pub holder_a: f64,
    /// Hölder constant `L`.
    pub holder_l: f64,
    /// Sup bound `B` on the support.
    pub bound: f64,
}

/// Functions act on the first latent coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegressionKind {
    /// `x -> sin(2 m pi x)`.
    Sine { m: f64 },
    Constant { c: f64 },
    /// `x -> slope x + intercept`.
    Linear { slope: f64, intercept: f64 },
    /// Piecewise-linear interpolation through `(x, y)` knots, constant outside.
    Table { knots: Vec<(f64, f64)> },
}

impl RegressionFunction {
    pub fn sine(m: f64) -> Self {
        Self {
            kind: RegressionKind::Sine { m },
            holder_a: 1.0,
            holder_l: 2.0 * m.abs() * PI,
            bound: 1.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            kind: RegressionKind::Constant { c },
            holder_a: 1.0,
            holder_l: 0.0,
            bound: c.abs(),
        }
    }

    /// Linear function; `bound` is its sup over the support in use.
    pub fn linear(slope: f64, intercept: f64, bound: f64) -> Self {
        Self {
            kind: RegressionKind::Linear { slope, intercept },
            holder_a: 1.0,
            holder_l: slope.abs(),
            bound,
        }
    }

    pub fn table(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(ModelError::InvalidRegression("table needs at least one knot".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(ModelError::InvalidRegression("table knots must have distinct x".into()));
        }
        let lipschitz = knots
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max);
        let bound = knots.iter().map(|k| k.1.abs()).fold(0.0, f64::max);
        Ok(Self {
            kind: RegressionKind::Table { knots },
            holder_a: 1.0,
            holder_l: lipschitz,
            bound,
        })
    }

    /// Build from a kind, deriving the Hölder constants the same way as the
    /// named constructors. Linear functions get their bound from `support`.
    pub fn from_kind(kind: RegressionKind, support: &DensitySpec) -> Result<Self> {
        Ok(match kind {
            RegressionKind::Sine { m } => Self::sine(m),
            RegressionKind::Constant { c } => Self::constant(c),
            RegressionKind::Linear { slope, intercept } => {
                let (lo, hi) = support.effective_bounds()[0];
                let bound = (slope * lo + intercept).abs().max((slope * hi + intercept).abs());
                Self::linear(slope, intercept, bound)
            }
            RegressionKind::Table { knots } => Self::table(knots)?,
        })
    }

    pub fn eval_scalar(&self, t: f64) -> f64 {
        match &self.kind {
            RegressionKind::Sine { m } => (2.0 * m * PI * t).sin(),
            RegressionKind::Constant { c } => *c,
            RegressionKind::Linear { slope, intercept } => slope * t + intercept,
            RegressionKind::Table { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let k = knots.partition_point(|k| k.0 <= t);
                let (x0, y0) = knots[k - 1];
                let (x1, y1) = knots[k];
                y0 + (y1 - y0) * (t - x0) / (x1 - x0)
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_scalar(x[0])
    }

    /// An antiderivative in the first coordinate, where one is available in closed form.
    pub fn antiderivative(&self, t: f64) -> Option<f64> {
        match &self.kind {
            RegressionKind::Sine { m } if *m != 0.0 => {
                let w = 2.0 * m * PI;
                Some(-(w * t).cos() / w)
            }
            RegressionKind::Sine { .. } => Some(0.0),
            RegressionKind::Constant { c } => Some(c * t),
            RegressionKind::Linear { slope, intercept } => Some(0.5 * slope * t * t + intercept * t),
            RegressionKind::Table { .. } => None,
        }
    }
}

/// Additive label noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian { variance: f64 },
    None,
}

impl NoiseSpec {
    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(ModelError::InvalidNoise(format!(
                "variance must be finite and non-negative, got {variance}"
            )));
        }
        Ok(NoiseSpec::Gaussian { variance })
    }

    pub fn variance(&self) -> f64 {
        match self {
            NoiseSpec::Gaussian { variance } => *variance,
            NoiseSpec::None => 0.0,
        }
    }

    pub fn sample(&self, rng: &mut seed::Rng) -> f64 {
        match self {
            NoiseSpec::Gaussian { variance } if *variance > 0.0 => {
                Normal::new(0.0, variance.sqrt()).expect("finite variance").sample(rng)
            }
            _ => 0.0,
        }
    }
}

/// Labels `y_i = f(x_i) + eps_i` for the `n` labelled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    pub values: Vec<f64>,
    pub function: RegressionFunction,
    pub noise: NoiseSpec,
}

impl LabelVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Labels not tied to any generating model, e.g. hand-written test inputs.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            function: RegressionFunction::constant(0.0),
            noise: NoiseSpec::None,
        }
    }
}

/// Label the first `n` nodes of `sample`; the regression node gets none.
pub fn sample_labels(
    sample: &LatentSample,
    f: &RegressionFunction,
    noise: &NoiseSpec,
    seed: u64,
) -> LabelVector {
    let mut rng = seed::rng(seed);
    let values = (0..sample.n())
        .map(|i| f.eval(sample.point(i)) + noise.sample(&mut rng))
        .collect();
    LabelVector {
        values,
        function: f.clone(),
        noise: *noise,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RunningStats;

    fn unit() -> DensitySpec {
        DensitySpec::unit_interval()
    }

    #[test]
    fn square_sample_stays_in_support() {
        let d = DensitySpec::uniform(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let s = sample_positions(&d, 1001, 11).unwrap();
        assert_eq!(s.n_nodes(), 1001);
        assert!(s.positions().points().all(|p| p.iter().all(|v| (-1.0..=1.0).contains(v))));
    }

    #[test]
    fn two_points_in_unit_interval() {
        let s = sample_positions(&unit(), 2, 5).unwrap();
        assert!(s.positions().coords().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(sample_positions(&unit(), 1, 5), Err(ModelError::TooFewPositions(1)));
    }

    #[test]
    fn gaussian_sampling_is_deterministic() {
        let d = DensitySpec::gaussian(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(sample_positions(&d, 50, 9).unwrap(), sample_positions(&d, 50, 9).unwrap());
        assert_ne!(sample_positions(&d, 50, 9).unwrap(), sample_positions(&d, 50, 10).unwrap());
    }

    #[test]
    fn invalid_densities_rejected() {
        assert!(DensitySpec::uniform(vec![1.0], vec![0.0]).is_err());
        assert!(DensitySpec::gaussian(vec![0.0], vec![0.0]).is_err());
        assert!(DensitySpec::uniform(vec![], vec![]).is_err());
    }

    #[test]
    fn kernel_values() {
        let g = LinkKernel::new(KernelProfile::Gaussian, 1.0, 0.1).unwrap();
        assert_eq!(kernel_eval(&g, 0.0), 1.0);
        let g1 = LinkKernel::new(KernelProfile::Gaussian, 1.0, 1.0).unwrap();
        assert!((kernel_eval(&g1, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((kernel_eval(&g1, 1.0) - 0.367879).abs() < 1e-6);
        let b = LinkKernel::new(KernelProfile::Box, 0.5, 1.0).unwrap();
        assert_eq!(kernel_eval(&b, 2.0), 0.0);
        assert_eq!(kernel_eval(&b, 1.0), 0.5);
    }

    #[test]
    fn box_assumption_holds_for_compact_profiles() {
        for p in [KernelProfile::Box, KernelProfile::TruncatedGaussian] {
            for k in 0..=4000 {
                let t = k as f64 * 0.001;
                let v = p.eval(t);
                let lo = if t <= p.m1() { 0.5 } else { 0.0 };
                let hi = if t <= p.m2() { 1.0 } else { 0.0 };
                assert!(lo <= v && v <= hi, "{p:?} at {t}");
            }
            assert_eq!(p.eval(0.0), 1.0);
        }
    }

    #[test]
    fn kernel_validation() {
        assert!(LinkKernel::new(KernelProfile::Box, 0.0, 1.0).is_err());
        assert!(LinkKernel::new(KernelProfile::Box, 1.5, 1.0).is_err());
        assert!(LinkKernel::new(KernelProfile::Box, 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_alpha_gives_empty_graph() {
        let s = sample_positions(&unit(), 40, 1).unwrap();
        let link = LinkKernel {
            profile: KernelProfile::Gaussian,
            alpha: 0.0,
            h_g: 1.0,
        };
        assert_eq!(sample_graph(&s, &link, 3).edge_count(), 0);
    }

    #[test]
    fn wide_box_gives_complete_graph() {
        let s = sample_positions(&unit(), 40, 1).unwrap();
        let link = LinkKernel::new(KernelProfile::Box, 1.0, 1.0).unwrap();
        let g = sample_graph(&s, &link, 3);
        assert_eq!(g.edge_count(), 40 * 39 / 2);
    }

    #[test]
    fn graph_is_symmetric_and_deterministic() {
        let s = sample_positions(&unit(), 60, 2).unwrap();
        let link = LinkKernel::new(KernelProfile::Gaussian, 1.0, 0.1).unwrap();
        let g = sample_graph(&s, &link, 8);
        for i in 0..60 {
            assert!(!g.has_edge(i, i));
            for j in 0..60 {
                assert_eq!(g.has_edge(i, j), g.has_edge(j, i));
            }
        }
        assert_eq!(g, sample_graph(&s, &link, 8));
        assert_eq!(g.seed(), 8);
    }

    #[test]
    fn edge_frequency_matches_kernel_at_fixed_distance() {
        // 2000 disjoint pairs at distance h_g: edge probability exp(-1).
        let h = 0.2;
        let pairs = 2000;
        let coords: Vec<f64> = (0..pairs).flat_map(|k| [10.0 * k as f64, 10.0 * k as f64 + h]).collect();
        let d = DensitySpec::uniform(vec![-1.0], vec![1e5]).unwrap();
        let s = LatentSample::new(Positions::from_1d(coords), d, 0).unwrap();
        let link = LinkKernel::new(KernelProfile::Gaussian, 1.0, h).unwrap();
        let g = sample_graph(&s, &link, 77);
        let hits = (0..pairs).filter(|&k| g.has_edge(2 * k, 2 * k + 1)).count();
        let p = (-1.0f64).exp();
        let se = (p * (1.0 - p) / pairs as f64).sqrt();
        assert!((hits as f64 / pairs as f64 - p).abs() <= 3.0 * se);
    }

    #[test]
    fn labels_follow_function_without_noise() {
        let s = sample_positions(&unit(), 30, 4).unwrap();
        let y = sample_labels(&s, &RegressionFunction::constant(2.5), &NoiseSpec::None, 1);
        assert_eq!(y.len(), 29);
        assert!(y.values.iter().all(|&v| v == 2.5));

        let f = RegressionFunction::sine(2.0);
        let y = sample_labels(&s, &f, &NoiseSpec::gaussian(0.0).unwrap(), 1);
        for (i, v) in y.values.iter().enumerate() {
            assert_eq!(*v, f.eval(s.point(i)));
        }
    }

    #[test]
    fn sine_vanishes_at_quarter_for_m2() {
        let d = unit();
        let s = LatentSample::new(Positions::from_1d(vec![0.25, 0.5]), d, 0).unwrap();
        let y = sample_labels(&s, &RegressionFunction::sine(2.0), &NoiseSpec::None, 0);
        assert!(y.values[0].abs() < 1e-15);
    }

    #[test]
    fn label_noise_is_centred() {
        let n = 100_000;
        let d = unit();
        let s = sample_positions(&d, n + 1, 12).unwrap();
        let f = RegressionFunction::sine(2.0);
        let y = sample_labels(&s, &f, &NoiseSpec::gaussian(1.5).unwrap(), 13);
        let stats: RunningStats = (0..n).map(|i| y.values[i] - f.eval(s.point(i))).collect();
        assert!(stats.estimate().within(0.0, 3.0));
        assert!((stats.variance() - 1.5).abs() < 0.05);
    }

    #[test]
    fn degree_counts() {
        let g = Graph::empty(5);
        assert_eq!(empirical_degree(&g, 4).unwrap(), 0);
        let g = Graph::complete(6);
        assert_eq!(empirical_degree(&g, 5).unwrap(), 5);
        let path = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(empirical_degree(&path, 1).unwrap(), 2);
        assert!(matches!(empirical_degree(&path, 3), Err(ModelError::NodeOutOfRange { .. })));
    }

    #[test]
    fn connectivity() {
        assert!(is_connected(&Graph::complete(7)));
        assert!(!is_connected(&Graph::empty(3)));
        assert!(!is_connected(&Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap()));
        assert!(is_connected(&Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap()));
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-12);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_integral_of_gaussian_by_quadrature() {
        let d = DensitySpec::gaussian(vec![0.3], vec![0.7]).unwrap();
        let (lo, hi) = d.effective_bounds()[0];
        let m = 200_000;
        let h = (hi - lo) / m as f64;
        let q: f64 = (0..=m)
            .map(|k| {
                let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                w * d.pdf(&[lo + k as f64 * h]).sqrt()
            })
            .sum::<f64>()
            * h;
        assert!((q - d.sqrt_density_integral()).abs() < 1e-8);
    }

    #[test]
    fn table_interpolates() {
        let f = RegressionFunction::table(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)]).unwrap();
        assert_eq!(f.eval_scalar(0.5), 1.0);
        assert_eq!(f.eval_scalar(1.5), 1.0);
        assert_eq!(f.eval_scalar(-3.0), 0.0);
        assert_eq!(f.holder_l, 2.0);
        assert_eq!(f.bound, 2.0);
    }
}
