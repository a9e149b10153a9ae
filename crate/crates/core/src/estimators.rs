//! Local averaging estimators: NW, graphical NW, NW on estimated distances,
//! the perturbed in-sample smoother and leave-one-out bandwidth selection.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Graph, LabelVector, Positions};
use crate::recovery::DistanceEstimate;
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node {index} out of range for a graph with {n_nodes} nodes")]
    NodeOutOfRange { index: usize, n_nodes: usize },
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("perturbation magnitude must be non-negative, got {0}")]
    InvalidPerturbation(f64),
    #[error("bandwidth grid is empty")]
    EmptyGrid,
    #[error("bandwidth grid must be positive and strictly increasing")]
    UnsortedGrid,
    #[error("expected univariate positions, got dimension {0}")]
    NotUnivariate(usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// Averaging kernel `phi` of the NW-type estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingKernel {
    /// `phi(t) = 1[t <= 1]`.
    #[default]
    Rectangular,
    /// `phi(t) = exp(-t^2)`.
    Gaussian,
    /// `phi(t) = exp(-t^2) 1[t <= 2]`.
    TruncatedGaussian,
}

impl AveragingKernel {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            AveragingKernel::Rectangular => {
                if t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            AveragingKernel::Gaussian => (-t * t).exp(),
            AveragingKernel::TruncatedGaussian => {
                if t <= 2.0 {
                    (-t * t).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn m1(self) -> f64 {
        match self {
            AveragingKernel::Rectangular => 1.0,
            _ => std::f64::consts::LN_2.sqrt(),
        }
    }

    pub fn m2(self) -> f64 {
        match self {
            AveragingKernel::Rectangular => 1.0,
            AveragingKernel::TruncatedGaussian => 2.0,
            AveragingKernel::Gaussian => f64::INFINITY,
        }
    }
}

/// Output of a local averaging estimator. When no weight falls in the
/// window the estimate is 0 and `denominator_positive` is false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub value: f64,
    pub denominator_positive: bool,
}

impl Prediction {
    pub const EMPTY: Prediction = Prediction {
        value: 0.0,
        denominator_positive: false,
    };

    fn from_sums(weighted: f64, total: f64) -> Self {
        if total > 0.0 {
            Prediction {
                value: weighted / total,
                denominator_positive: true,
            }
        } else {
            Self::EMPTY
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(EstimatorError::InvalidBandwidth(tau))
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(EstimatorError::LengthMismatch { what, expected, got })
    }
}

/// Nadaraya-Watson estimate from the distances `delta_i` of the labelled
/// points to the query.
pub fn nw_predict(
    distances: &[f64],
    labels: &LabelVector,
    phi: AveragingKernel,
    tau: f64,
) -> Result<Prediction> {
    check_tau(tau)?;
    check_len("distances", labels.len(), distances.len())?;
    let (mut num, mut den) = (0.0, 0.0);
    for (d, y) in distances.iter().zip(&labels.values) {
        let w = phi.eval(d / tau);
        num += w * y;
        den += w;
    }
    Ok(Prediction::from_sums(num, den))
}

/// NW on estimated distances; the same computation as [`nw_predict`].
pub fn enw_predict(
    estimated: &DistanceEstimate,
    labels: &LabelVector,
    phi: AveragingKernel,
    tau: f64,
) -> Result<Prediction> {
    nw_predict(&estimated.values, labels, phi, tau)
}

/// Graphical NW: the mean label of the neighbours of `node`.
///
/// `labels` covers every node except `node`, in node order.
pub fn gnw_predict(graph: &Graph, labels: &LabelVector, node: usize) -> Result<Prediction> {
    let n_nodes = graph.n_nodes();
    if node >= n_nodes {
        return Err(EstimatorError::NodeOutOfRange { index: node, n_nodes });
    }
    check_len("labels", n_nodes - 1, labels.len())?;
    let (mut sum, mut deg) = (0.0, 0usize);
    for j in graph.neighbors(node) {
        sum += labels.values[if j < node { j } else { j - 1 }];
        deg += 1;
    }
    Ok(Prediction::from_sums(sum, deg as f64))
}

/// In-sample GNW: every node predicted by the mean label of its neighbours.
pub fn gnw_in_sample(graph: &Graph, labels: &[f64]) -> Result<Vec<Prediction>> {
    check_len("labels", graph.n_nodes(), labels.len())?;
    Ok((0..graph.n_nodes())
        .map(|i| {
            let (mut sum, mut deg) = (0.0, 0usize);
            for j in graph.neighbors(i) {
                sum += labels[j];
                deg += 1;
            }
            Prediction::from_sums(sum, deg as f64)
        })
        .collect())
}

/// In-sample NW smoother over univariate design points.
///
/// Rectangular windows are located by binary search on the sorted design,
/// other kernels are evaluated by direct summation.
#[derive(Debug, Clone)]
pub struct Smoother1d {
    xs: Vec<f64>,
    ys: Vec<f64>,
    order: Vec<usize>,
    sorted_x: Vec<f64>,
    sorted_y: Vec<f64>,
}

impl Smoother1d {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        check_len("labels", xs.len(), ys.len())?;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let sorted_x: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
        let sorted_y: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
        Ok(Self {
            xs,
            ys,
            order,
            sorted_x,
            sorted_y,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn labels(&self) -> &[f64] {
        &self.ys
    }

    /// Smoothed value at every design point. With `include_self` false each
    /// point is predicted from the others only (leave-one-out).
    pub fn smooth(&self, phi: AveragingKernel, tau: f64, include_self: bool) -> Result<Vec<Prediction>> {
        check_tau(tau)?;
        Ok(match phi {
            AveragingKernel::Rectangular => self.smooth_rectangular(tau, include_self),
            _ => self.smooth_direct(phi, tau, include_self),
        })
    }

    fn smooth_rectangular(&self, tau: f64, include_self: bool) -> Vec<Prediction> {
        let n = self.len();
        let sx = &self.sorted_x;
        let mut out = vec![Prediction::EMPTY; n];
        for (p, &i) in self.order.iter().enumerate() {
            let x = sx[p];
            // Same predicate as `AveragingKernel::Rectangular.eval(|x - x_j| / tau)`.
            let lo = sx[..p].partition_point(|&xj| (x - xj) / tau > 1.0);
            let hi = p + 1 + sx[p + 1..].partition_point(|&xj| (xj - x) / tau <= 1.0);
            let (sum, count) = if include_self {
                (self.sorted_y[lo..hi].iter().sum::<f64>(), hi - lo)
            } else {
                let before: f64 = self.sorted_y[lo..p].iter().sum();
                (before + self.sorted_y[p + 1..hi].iter().sum::<f64>(), hi - lo - 1)
            };
            out[i] = Prediction::from_sums(sum, count as f64);
        }
        out
    }

    fn smooth_direct(&self, phi: AveragingKernel, tau: f64, include_self: bool) -> Vec<Prediction> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let (mut num, mut den) = (0.0, 0.0);
                for j in 0..n {
                    if j == i && !include_self {
                        continue;
                    }
                    let w = phi.eval((self.xs[j] - self.xs[i]).abs() / tau);
                    num += w * self.ys[j];
                    den += w;
                }
                Prediction::from_sums(num, den)
            })
            .collect()
    }

    /// Mean squared leave-one-out prediction error of the labels.
    pub fn loocv_score(&self, phi: AveragingKernel, tau: f64) -> Result<f64> {
        let preds = self.smooth(phi, tau, false)?;
        Ok(preds
            .iter()
            .zip(&self.ys)
            .map(|(p, y)| (p.value - y).powi(2))
            .sum::<f64>()
            / self.len() as f64)
    }
}

/// Perturb every coordinate once: `x_i + delta * u_i`, `u_i ~ U[-1, 1]`.
pub fn perturb_positions(xs: &[f64], delta: f64, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    xs.iter()
        .map(|x| x + delta * (2.0 * rng.gen::<f64>() - 1.0))
        .collect()
}

/// In-sample NW smoothing on perturbed univariate positions, averaging over
/// all points including the point itself, with the original labels.
pub fn perturbed_nw_smooth(
    positions: &Positions,
    labels: &LabelVector,
    phi: AveragingKernel,
    tau: f64,
    delta: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if positions.dim() != 1 {
        return Err(EstimatorError::NotUnivariate(positions.dim()));
    }
    if !(delta >= 0.0) {
        return Err(EstimatorError::InvalidPerturbation(delta));
    }
    check_len("labels", positions.len(), labels.len())?;
    let perturbed = perturb_positions(positions.coords(), delta, seed);
    let smoother = Smoother1d::new(perturbed, labels.values.clone())?;
    Ok(smoother
        .smooth(phi, tau, true)?
        .into_iter()
        .map(|p| p.value)
        .collect())
}

/// `(1/n) sum (smoothed_i - f_i)^2`.
pub fn smoothed_mse(smoothed: &[f64], f_values: &[f64]) -> Result<f64> {
    check_len("smoothed values", f_values.len(), smoothed.len())?;
    if smoothed.is_empty() {
        return Ok(0.0);
    }
    Ok(smoothed
        .iter()
        .zip(f_values)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / smoothed.len() as f64)
}

/// Candidate bandwidths, strictly increasing and positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthGrid {
    values: Vec<f64>,
    /// Centre and span factor when built around a reference bandwidth.
    around: Option<(f64, f64)>,
}

impl BandwidthGrid {
    pub const DEFAULT_POINTS: usize = 50;
    pub const DEFAULT_SPAN: f64 = 10.0;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EstimatorError::EmptyGrid);
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || values.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(EstimatorError::UnsortedGrid);
        }
        Ok(Self { values, around: None })
    }

    /// `num` geometrically spaced points on `[lo, hi]`.
    pub fn log_spaced(lo: f64, hi: f64, num: usize) -> Result<Self> {
        if num == 1 {
            return Self::new(vec![lo]);
        }
        let (a, b) = (lo.ln(), hi.ln());
        Self::new(
            (0..num)
                .map(|k| (a + (b - a) * k as f64 / (num - 1) as f64).exp())
                .collect(),
        )
    }

    /// `num` evenly spaced points on `[lo, hi]`.
    pub fn linear(lo: f64, hi: f64, num: usize) -> Result<Self> {
        if num == 1 {
            return Self::new(vec![lo]);
        }
        Self::new(
            (0..num)
                .map(|k| lo + (hi - lo) * k as f64 / (num - 1) as f64)
                .collect(),
        )
    }

    /// Window `[center / span, center * span]`, log-spaced unless `linear`.
    pub fn around(center: f64, span: f64, num: usize, linear: bool) -> Result<Self> {
        let (lo, hi) = (center / span, center * span);
        let mut grid = if linear {
            Self::linear(lo, hi, num)?
        } else {
            Self::log_spaced(lo, hi, num)?
        };
        grid.around = Some((center, span));
        Ok(grid)
    }

    /// Absolute grid used before any cross-validated bandwidth is known.
    pub fn fallback() -> Self {
        Self::log_spaced(1e-3, 1.0, Self::DEFAULT_POINTS).expect("valid fallback grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn center(&self) -> Option<(f64, f64)> {
        self.around
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Leave-one-out score of every grid bandwidth.
pub fn loocv_scores(
    positions: &Positions,
    labels: &[f64],
    phi: AveragingKernel,
    grid: &BandwidthGrid,
) -> Result<Vec<f64>> {
    check_len("labels", positions.len(), labels.len())?;
    if positions.len() < 2 {
        return Err(EstimatorError::TooFewPoints {
            needed: 2,
            got: positions.len(),
        });
    }
    if positions.dim() == 1 {
        let smoother = Smoother1d::new(positions.coords().to_vec(), labels.to_vec())?;
        return grid.values().iter().map(|&t| smoother.loocv_score(phi, t)).collect();
    }
    let n = positions.len();
    let dist: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| positions.distance(i, j))
        .collect();
    Ok(grid
        .values()
        .iter()
        .map(|&tau| {
            (0..n)
                .map(|i| {
                    let (mut num, mut den) = (0.0, 0.0);
                    for j in (0..n).filter(|&j| j != i) {
                        let w = phi.eval(dist[i * n + j] / tau);
                        num += w * labels[j];
                        den += w;
                    }
                    (Prediction::from_sums(num, den).value - labels[i]).powi(2)
                })
                .sum::<f64>()
                / n as f64
        })
        .collect())
}

/// Relative slack under which two scores count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Index of the minimal score, ties resolved toward the first (smallest bandwidth).
pub fn argmin_first(scores: &[f64]) -> Option<usize> {
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    scores.iter().position(|&s| s <= best + TIE_TOLERANCE * best.abs())
}

/// Bandwidth minimising the leave-one-out squared error. Empty windows predict 0.
pub fn loocv_bandwidth(
    positions: &Positions,
    labels: &[f64],
    phi: AveragingKernel,
    grid: &BandwidthGrid,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(EstimatorError::EmptyGrid);
    }
    let scores = loocv_scores(positions, labels, phi, grid)?;
    let k = argmin_first(&scores).ok_or(EstimatorError::EmptyGrid)?;
    Ok(grid.values()[k])
}

/// `c n^{-1/(2a+d)}`, the order of the optimal NW bandwidth.
pub fn optimal_bandwidth_rate(n: usize, a: f64, d: usize, c: f64) -> f64 {
    c * (n as f64).powf(-1.0 / (2.0 * a + d as f64))
}
