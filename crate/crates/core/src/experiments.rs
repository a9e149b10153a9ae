//! Monte Carlo risk estimation and the simulation protocols: NW under
//! perturbed design points, recovery error against the length-scale, and the
//! GNW / ENW bias-variance sweep.
//!
//! Every random draw comes from a seed derived from the master seed and the
//! (stream, grid index, attempt) path, so results do not depend on scheduling.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    self, gnw_in_sample, gnw_predict, loocv_bandwidth, nw_predict, AveragingKernel, BandwidthGrid,
    EstimatorError, Prediction, Smoother1d,
};
use crate::model::{
    sample_graph, sample_labels, sample_positions, DensitySpec, Graph, KernelProfile, LatentSample,
    LinkKernel, ModelError, NoiseSpec, Positions, RegressionFunction,
};
use crate::oracle;
use crate::recovery::{
    align_1d, distance_error_delta, distances_from_positions, position_error_d, recover_sp,
    recover_spectral, DistanceEstimate, PositionEstimate, RecoveryAlgorithm, RecoveryError,
    SpectralConfig,
};
use crate::seed::{self, stream};
use crate::stats::{Estimate, RunningStats};

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("unknown estimator tag `{0}`")]
    UnknownEstimator(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{attempts} attempts produced no usable graph for {what}")]
    RetriesExhausted { what: String, attempts: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidConfig(msg.into())
}

/// Estimators compared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorTag {
    Gnw,
    Nw,
    EnwSp,
    EnwSpectral,
}

impl EstimatorTag {
    pub const ALL: [EstimatorTag; 4] = [
        EstimatorTag::Gnw,
        EstimatorTag::Nw,
        EstimatorTag::EnwSp,
        EstimatorTag::EnwSpectral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::Gnw => "gnw",
            EstimatorTag::Nw => "nw",
            EstimatorTag::EnwSp => "enw-sp",
            EstimatorTag::EnwSpectral => "enw-spectral",
        }
    }

    fn recovery(self) -> Option<RecoveryAlgorithm> {
        match self {
            EstimatorTag::EnwSp => Some(RecoveryAlgorithm::ShortestPath),
            EstimatorTag::EnwSpectral => Some(RecoveryAlgorithm::Spectral),
            _ => None,
        }
    }
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorTag {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ExperimentError::UnknownEstimator(s.to_string()))
    }
}

/// Run a recovery algorithm on univariate latent positions.
pub fn recover(graph: &Graph, algorithm: RecoveryAlgorithm, spectral: SpectralConfig) -> std::result::Result<PositionEstimate, RecoveryError> {
    match algorithm {
        RecoveryAlgorithm::Spectral => recover_spectral(graph, spectral, 1),
        _ => recover_sp(graph, 1),
    }
}

fn is_disconnection(e: &RecoveryError) -> bool {
    matches!(e, RecoveryError::Disconnected | RecoveryError::DisconnectedThreshold { .. })
}

/// Labels `f(x_i) + eps_i` for every position.
pub fn label_all(positions: &Positions, f: &RegressionFunction, noise: &NoiseSpec, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    positions.points().map(|p| f.eval(p) + noise.sample(&mut rng)).collect()
}

/// One point of a risk curve; `mean` and `stderr` are `None` when fewer than
/// two replicas completed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub num_replicas: u64,
    pub num_retries: u64,
}

impl CurvePoint {
    fn from_stats(stats: &RunningStats, retries: u64) -> Self {
        let complete = stats.count() >= 2;
        CurvePoint {
            mean: complete.then(|| stats.mean()),
            stderr: complete.then(|| stats.stderr()),
            num_replicas: stats.count(),
            num_retries: retries,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.mean.is_none()
    }
}

/// Mean squared error curves over a common grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskCurve {
    pub grid: Vec<f64>,
    pub series: Vec<(EstimatorTag, Vec<CurvePoint>)>,
}

impl RiskCurve {
    pub fn series(&self, tag: EstimatorTag) -> Option<&[CurvePoint]> {
        self.series.iter().find(|(t, _)| *t == tag).map(|(_, p)| p.as_slice())
    }
}

/// Which quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridKind {
    /// Vary the graph length-scale `h_g`.
    LengthscaleSweep,
    /// Keep `h_g` fixed and vary the NW bandwidth.
    BandwidthSweep { h_g: f64 },
}

/// Full description of a bias-variance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n: usize,
    pub density: DensitySpec,
    pub profile: KernelProfile,
    pub alpha: f64,
    pub regression: RegressionFunction,
    pub noise_variance: f64,
    pub num_mc: usize,
    pub num_pts: usize,
    pub seed: u64,
    pub grid: GridKind,
    pub linear_grid: bool,
    /// Grid spans `[tau_cv / span, tau_cv * span]`.
    pub span: f64,
    pub spectral: SpectralConfig,
    /// Extra attempts per grid point to replace disconnected graphs.
    pub max_retries: usize,
    /// Reuse one set of latent positions for every replica.
    pub fix_positions: bool,
    pub phi: AveragingKernel,
}

impl SweepConfig {
    /// The setting of the bias-variance figure: sine regression on `U[0, 1]`,
    /// gaussian link, `n = 500`, 20 replicas, 50 grid points.
    pub fn figure(m: f64, noise_variance: f64, seed: u64) -> Self {
        SweepConfig {
            n: 500,
            density: DensitySpec::unit_interval(),
            profile: KernelProfile::Gaussian,
            alpha: 1.0,
            regression: RegressionFunction::sine(m),
            noise_variance,
            num_mc: 20,
            num_pts: 50,
            seed,
            grid: GridKind::LengthscaleSweep,
            linear_grid: false,
            span: BandwidthGrid::DEFAULT_SPAN,
            spectral: SpectralConfig::default(),
            max_retries: 10,
            fix_positions: false,
            phi: AveragingKernel::Rectangular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n must be at least 2"));
        }
        if self.density.dim() != 1 {
            return Err(invalid("sweeps need univariate latent positions"));
        }
        if self.num_mc < 1 {
            return Err(invalid("NUM_MC must be at least 1"));
        }
        if self.num_pts < 2 {
            return Err(invalid("NUM_PTS must be at least 2"));
        }
        if !(self.span > 1.0) {
            return Err(invalid("grid span must exceed 1"));
        }
        NoiseSpec::gaussian(self.noise_variance)?;
        self.density.validate()?;
        LinkKernel::new(self.profile, self.alpha, 1.0)?;
        if let GridKind::BandwidthSweep { h_g } = self.grid {
            LinkKernel::new(self.profile, self.alpha, h_g)?;
        }
        self.spectral.validate()?;
        Ok(())
    }

    fn noise(&self) -> NoiseSpec {
        NoiseSpec::Gaussian {
            variance: self.noise_variance,
        }
    }

    fn instance(&self, attempt: u64) -> Result<Instance> {
        let pos_seed = if self.fix_positions {
            seed::derive(self.seed, &[stream::POSITIONS])
        } else {
            seed::derive(self.seed, &[stream::POSITIONS, attempt])
        };
        let sample = sample_positions(&self.density, self.n, pos_seed)?;
        let labels = label_all(
            sample.positions(),
            &self.regression,
            &self.noise(),
            seed::derive(self.seed, &[stream::NOISE, attempt]),
        );
        let truth = sample.positions().points().map(|p| self.regression.eval(p)).collect();
        Ok(Instance { sample, labels, truth })
    }

    fn graph(&self, inst: &Instance, h_g: f64, grid_index: u64, attempt: u64) -> Result<Graph> {
        let link = LinkKernel::new(self.profile, self.alpha, h_g)?;
        Ok(sample_graph(
            &inst.sample,
            &link,
            seed::derive(self.seed, &[stream::EDGES, grid_index, attempt]),
        ))
    }
}

struct Instance {
    sample: LatentSample,
    labels: Vec<f64>,
    truth: Vec<f64>,
}

fn mse(preds: &[Prediction], truth: &[f64]) -> f64 {
    preds.iter().zip(truth).map(|(p, t)| (p.value - t).powi(2)).sum::<f64>() / truth.len() as f64
}

/// Leave-one-out bandwidth on the fallback grid.
fn cv_bandwidth(xs: &[f64], labels: &[f64], phi: AveragingKernel) -> Result<f64> {
    Ok(loocv_bandwidth(
        &Positions::from_1d(xs.to_vec()),
        labels,
        phi,
        &BandwidthGrid::fallback(),
    )?)
}

/// In-sample ENW error: recovered coordinates, bandwidth by leave-one-out on
/// them, then each node predicted from the others.
fn enw_in_sample_mse(recovered: &Positions, inst: &Instance, phi: AveragingKernel) -> Result<f64> {
    let xs = recovered.coords().to_vec();
    let tau = cv_bandwidth(&xs, &inst.labels, phi)?;
    let smoother = Smoother1d::new(xs, inst.labels.clone())?;
    Ok(mse(&smoother.smooth(phi, tau, false)?, &inst.truth))
}

/// Result of [`run_bias_variance_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Cross-validated NW bandwidth on the pilot draw; the grid is centred on it.
    pub tau_cv: f64,
    pub curve: RiskCurve,
}

/// Cross-validated bandwidth on a pilot draw of true positions and labels.
pub fn pilot_bandwidth(
    density: &DensitySpec,
    n: usize,
    f: &RegressionFunction,
    noise: &NoiseSpec,
    phi: AveragingKernel,
    master: u64,
) -> Result<f64> {
    let sample = sample_positions(density, n, seed::derive(master, &[stream::PILOT, stream::POSITIONS]))?;
    let labels = label_all(sample.positions(), f, noise, seed::derive(master, &[stream::PILOT, stream::NOISE]));
    cv_bandwidth(sample.positions().coords(), &labels, phi)
}

/// GNW / ENW bias-variance sweep on in-sample smoothed MSE.
pub fn run_bias_variance_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let tau_cv = pilot_bandwidth(&cfg.density, cfg.n, &cfg.regression, &cfg.noise(), cfg.phi, cfg.seed)?;
    let grid = BandwidthGrid::around(tau_cv, cfg.span, cfg.num_pts, cfg.linear_grid)?;
    let curve = match cfg.grid {
        GridKind::LengthscaleSweep => lengthscale_sweep(cfg, grid.values())?,
        GridKind::BandwidthSweep { h_g } => bandwidth_sweep(cfg, h_g, grid.values())?,
    };
    Ok(SweepResult { tau_cv, curve })
}

const SWEEP_TAGS: [EstimatorTag; 3] = [EstimatorTag::Gnw, EstimatorTag::EnwSp, EstimatorTag::EnwSpectral];

fn lengthscale_sweep(cfg: &SweepConfig, grid: &[f64]) -> Result<RiskCurve> {
    let points: Vec<[CurvePoint; 3]> = grid
        .par_iter()
        .enumerate()
        .map(|(g, &h_g)| lengthscale_point(cfg, g as u64, h_g))
        .collect::<Result<_>>()?;
    Ok(RiskCurve {
        grid: grid.to_vec(),
        series: SWEEP_TAGS
            .iter()
            .enumerate()
            .map(|(s, &tag)| (tag, points.iter().map(|p| p[s]).collect()))
            .collect(),
    })
}

fn lengthscale_point(cfg: &SweepConfig, g: u64, h_g: f64) -> Result<[CurvePoint; 3]> {
    let mut stats = [RunningStats::new(), RunningStats::new(), RunningStats::new()];
    let mut retries = [0u64; 3];
    let target = cfg.num_mc as u64;
    for attempt in 0..(cfg.num_mc + cfg.max_retries) as u64 {
        if stats.iter().all(|s| s.count() >= target) {
            break;
        }
        let inst = cfg.instance(attempt)?;
        let graph = cfg.graph(&inst, h_g, g, attempt)?;
        if stats[0].count() < target {
            stats[0].push(mse(&gnw_in_sample(&graph, &inst.labels)?, &inst.truth));
        }
        for s in 1..3 {
            if stats[s].count() >= target {
                continue;
            }
            let algorithm = SWEEP_TAGS[s].recovery().expect("ENW tag");
            match recover(&graph, algorithm, cfg.spectral) {
                Ok(est) => stats[s].push(enw_in_sample_mse(&est.positions, &inst, cfg.phi)?),
                Err(e) if is_disconnection(&e) => retries[s] += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok([0, 1, 2].map(|s| CurvePoint::from_stats(&stats[s], retries[s])))
}

fn bandwidth_sweep(cfg: &SweepConfig, h_g: f64, grid: &[f64]) -> Result<RiskCurve> {
    let tags = [
        EstimatorTag::Gnw,
        EstimatorTag::Nw,
        EstimatorTag::EnwSp,
        EstimatorTag::EnwSpectral,
    ];
    let mut stats = vec![vec![RunningStats::new(); grid.len()]; tags.len()];
    let mut retries = [0u64; 4];
    let target = cfg.num_mc as u64;
    for attempt in 0..(cfg.num_mc + cfg.max_retries) as u64 {
        if stats.iter().all(|s| s[0].count() >= target) {
            break;
        }
        let inst = cfg.instance(attempt)?;
        let graph = cfg.graph(&inst, h_g, 0, attempt)?;
        if stats[0][0].count() < target {
            let e = mse(&gnw_in_sample(&graph, &inst.labels)?, &inst.truth);
            stats[0].iter_mut().for_each(|s| s.push(e));
        }
        if stats[1][0].count() < target {
            let sm = Smoother1d::new(inst.sample.positions().coords().to_vec(), inst.labels.clone())?;
            for (k, &tau) in grid.iter().enumerate() {
                stats[1][k].push(mse(&sm.smooth(cfg.phi, tau, false)?, &inst.truth));
            }
        }
        for s in 2..4 {
            if stats[s][0].count() >= target {
                continue;
            }
            match recover(&graph, tags[s].recovery().expect("ENW tag"), cfg.spectral) {
                Ok(est) => {
                    let sm = Smoother1d::new(est.positions.coords().to_vec(), inst.labels.clone())?;
                    for (k, &tau) in grid.iter().enumerate() {
                        stats[s][k].push(mse(&sm.smooth(cfg.phi, tau, false)?, &inst.truth));
                    }
                }
                Err(e) if is_disconnection(&e) => retries[s] += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(RiskCurve {
        grid: grid.to_vec(),
        series: tags
            .iter()
            .enumerate()
            .map(|(s, &tag)| (tag, stats[s].iter().map(|st| CurvePoint::from_stats(st, retries[s])).collect()))
            .collect(),
    })
}

/// Model and estimator settings for pointwise and global risk estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskConfig {
    pub n: usize,
    pub density: DensitySpec,
    pub link: LinkKernel,
    pub regression: RegressionFunction,
    pub noise: NoiseSpec,
    pub phi: AveragingKernel,
    /// NW / ENW bandwidth; chosen by leave-one-out when absent.
    pub tau: Option<f64>,
    pub spectral: SpectralConfig,
    pub max_retries: usize,
}

/// Prediction at the regression node of `sample` from one graph and label draw.
fn predict_query(
    cfg: &RiskConfig,
    tag: EstimatorTag,
    sample: &LatentSample,
    graph: &Graph,
    labels: &crate::model::LabelVector,
) -> Result<Option<Prediction>> {
    let q = sample.query_index();
    let phi = cfg.phi;
    match tag {
        EstimatorTag::Gnw => Ok(Some(gnw_predict(graph, labels, q)?)),
        EstimatorTag::Nw => {
            let tau = match cfg.tau {
                Some(t) => t,
                None => cv_bandwidth(&sample.positions().coords()[..q], &labels.values, phi)?,
            };
            Ok(Some(nw_predict(&sample.query_distances(), labels, phi, tau)?))
        }
        EstimatorTag::EnwSp | EstimatorTag::EnwSpectral => {
            let est = match recover(graph, tag.recovery().expect("ENW tag"), cfg.spectral) {
                Ok(est) => est,
                Err(e) if is_disconnection(&e) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            let tau = match cfg.tau {
                Some(t) => t,
                None => cv_bandwidth(&est.positions.coords()[..q], &labels.values, phi)?,
            };
            let dist = distances_from_positions(&est.positions, q)?;
            Ok(Some(estimators::enw_predict(&dist, labels, phi, tau)?))
        }
    }
}

fn squared_error_with_retries(
    cfg: &RiskConfig,
    tag: EstimatorTag,
    sample: &LatentSample,
    master: u64,
    replica: u64,
) -> Result<f64> {
    let labels = sample_labels(sample, &cfg.regression, &cfg.noise, seed::derive(master, &[stream::NOISE, replica]));
    let target = cfg.regression.eval(sample.point(sample.query_index()));
    for attempt in 0..=cfg.max_retries as u64 {
        let graph = sample_graph(sample, &cfg.link, seed::derive(master, &[stream::EDGES, replica, attempt]));
        if let Some(p) = predict_query(cfg, tag, sample, &graph, &labels)? {
            return Ok((p.value - target).powi(2));
        }
    }
    Err(ExperimentError::RetriesExhausted {
        what: format!("{tag} replica {replica}"),
        attempts: cfg.max_retries + 1,
    })
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas < 2 {
        Err(invalid("at least 2 replicas are needed"))
    } else {
        Ok(())
    }
}

/// Pointwise risk at `x`: labelled positions fixed by `seed`, edges and noise
/// redrawn for every replica.
pub fn mc_pointwise_risk(
    cfg: &RiskConfig,
    tag: EstimatorTag,
    x: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Estimate> {
    check_replicas(replicas)?;
    let sample = LatentSample::with_query(&cfg.density, cfg.n, x, seed::derive(seed, &[stream::POSITIONS]))?;
    let errors: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| squared_error_with_retries(cfg, tag, &sample, seed, r))
        .collect::<Result<_>>()?;
    Ok(errors.into_iter().collect::<RunningStats>().estimate())
}

/// Global risk: positions, query point, edges and noise redrawn every replica.
pub fn mc_global_risk(cfg: &RiskConfig, tag: EstimatorTag, replicas: usize, seed: u64) -> Result<Estimate> {
    check_replicas(replicas)?;
    let errors: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let x = cfg.density.sample_point(&mut seed::rng(seed::derive(seed, &[stream::QUERY, r])));
            let sample = LatentSample::with_query(&cfg.density, cfg.n, &x, seed::derive(seed, &[stream::POSITIONS, r]))?;
            squared_error_with_retries(cfg, tag, &sample, seed, r)
        })
        .collect::<Result<_>>()?;
    Ok(errors.into_iter().collect::<RunningStats>().estimate())
}

/// Settings of the perturbed-design NW experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedNwConfig {
    pub n: usize,
    /// Frequency `m` of `sin(2 m pi x)`.
    pub m: f64,
    pub noise_variance: f64,
    /// Perturbation magnitudes as multiples of the cross-validated bandwidth.
    pub multiples: Vec<f64>,
    pub num_mc: usize,
    pub num_pts: usize,
    pub span: f64,
    pub phi: AveragingKernel,
    pub seed: u64,
}

impl PerturbedNwConfig {
    /// `n = 500`, `sin(4 pi x)`, noise variance 1.5, perturbations 0, 1 and 2
    /// bandwidths, 20 replicas.
    pub fn figure(seed: u64) -> Self {
        PerturbedNwConfig {
            n: 500,
            m: 2.0,
            noise_variance: 1.5,
            multiples: vec![0.0, 1.0, 2.0],
            num_mc: 20,
            num_pts: 50,
            span: BandwidthGrid::DEFAULT_SPAN,
            phi: AveragingKernel::Rectangular,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.num_mc < 1 || self.num_pts < 2 || self.multiples.is_empty() {
            return Err(invalid("need n >= 2, NUM_MC >= 1, NUM_PTS >= 2 and at least one multiple"));
        }
        if self.multiples.iter().any(|k| !(*k >= 0.0)) {
            return Err(invalid("perturbation multiples must be non-negative"));
        }
        if !(self.span > 1.0) {
            return Err(invalid("grid span must exceed 1"));
        }
        NoiseSpec::gaussian(self.noise_variance)?;
        Ok(())
    }
}

/// Smoothed-MSE curves of the perturbed-design experiment, one per multiple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedNwResult {
    pub tau_star: f64,
    pub grid: Vec<f64>,
    pub curves: Vec<(f64, Vec<CurvePoint>)>,
}

/// Minimum of a curve with the standard error at the minimising grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveMinimum {
    pub index: usize,
    pub mean: f64,
    pub stderr: f64,
}

pub fn curve_minimum(points: &[CurvePoint]) -> Option<CurveMinimum> {
    points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| Some((i, p.mean?, p.stderr?)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(index, mean, stderr)| CurveMinimum { index, mean, stderr })
}

/// `a <= b` up to `k` combined standard errors.
pub fn min_not_worse(a: &CurveMinimum, b: &CurveMinimum, k: f64) -> bool {
    a.mean <= b.mean + k * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

/// NW in-sample smoothing on design points perturbed by `k tau*` for each
/// multiple `k`; the same positions, labels and perturbation directions are
/// shared by all multiples within a replica.
pub fn run_perturbed_nw_experiment(cfg: &PerturbedNwConfig) -> Result<PerturbedNwResult> {
    cfg.validate()?;
    let density = DensitySpec::unit_interval();
    let f = RegressionFunction::sine(cfg.m);
    let noise = NoiseSpec::Gaussian {
        variance: cfg.noise_variance,
    };
    let tau_star = pilot_bandwidth(&density, cfg.n, &f, &noise, cfg.phi, cfg.seed)?;
    let grid = BandwidthGrid::around(tau_star, cfg.span, cfg.num_pts, false)?;
    let per_replica: Vec<Vec<Vec<f64>>> = (0..cfg.num_mc as u64)
        .into_par_iter()
        .map(|r| {
            let sample = sample_positions(&density, cfg.n, seed::derive(cfg.seed, &[stream::POSITIONS, r]))?;
            let xs = sample.positions().coords();
            let labels = label_all(sample.positions(), &f, &noise, seed::derive(cfg.seed, &[stream::NOISE, r]));
            let truth: Vec<f64> = xs.iter().map(|&x| f.eval_scalar(x)).collect();
            let dir = estimators::perturb_positions(&vec![0.0; xs.len()], 1.0, seed::derive(cfg.seed, &[stream::PERTURBATION, r]));
            cfg.multiples
                .iter()
                .map(|k| {
                    let delta = k * tau_star;
                    let moved: Vec<f64> = xs.iter().zip(&dir).map(|(x, u)| x + delta * u).collect();
                    let sm = Smoother1d::new(moved, labels.clone())?;
                    grid.values()
                        .iter()
                        .map(|&tau| Ok(mse(&sm.smooth(cfg.phi, tau, true)?, &truth)))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let curves = cfg
        .multiples
        .iter()
        .enumerate()
        .map(|(m, &k)| {
            let points = (0..grid.len())
                .map(|t| {
                    let stats: RunningStats = per_replica.iter().map(|rep| rep[m][t]).collect();
                    CurvePoint::from_stats(&stats, 0)
                })
                .collect();
            (k, points)
        })
        .collect();
    Ok(PerturbedNwResult {
        tau_star,
        grid: grid.values().to_vec(),
        curves,
    })
}

/// Settings of the recovery-error experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryCurveConfig {
    pub n: usize,
    pub density: DensitySpec,
    pub profile: KernelProfile,
    pub alpha: f64,
    pub num_mc: usize,
    pub spectral: SpectralConfig,
    pub max_retries: usize,
    pub seed: u64,
}

impl RecoveryCurveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 || self.num_mc < 1 {
            return Err(invalid("need n >= 3 and NUM_MC >= 1"));
        }
        if self.density.dim() != 1 {
            return Err(invalid("recovery curves need univariate latent positions"));
        }
        self.spectral.validate()?;
        LinkKernel::new(self.profile, self.alpha, 1.0)?;
        Ok(())
    }
}

/// Mean position error `D` per recovery algorithm over a length-scale grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryCurve {
    pub grid: Vec<f64>,
    pub series: Vec<(RecoveryAlgorithm, Vec<CurvePoint>)>,
}

/// Position error of both recovery algorithms against `h_g`, after alignment.
pub fn run_recovery_error_curve(cfg: &RecoveryCurveConfig, grid: &[f64]) -> Result<RecoveryCurve> {
    cfg.validate()?;
    let algorithms = [RecoveryAlgorithm::ShortestPath, RecoveryAlgorithm::Spectral];
    let points: Vec<[CurvePoint; 2]> = grid
        .par_iter()
        .enumerate()
        .map(|(g, &h_g)| {
            let link = LinkKernel::new(cfg.profile, cfg.alpha, h_g)?;
            let mut stats = [RunningStats::new(), RunningStats::new()];
            let mut retries = [0u64; 2];
            let target = cfg.num_mc as u64;
            for attempt in 0..(cfg.num_mc + cfg.max_retries) as u64 {
                if stats.iter().all(|s| s.count() >= target) {
                    break;
                }
                let sample = sample_positions(&cfg.density, cfg.n, seed::derive(cfg.seed, &[stream::POSITIONS, attempt]))?;
                let graph = sample_graph(&sample, &link, seed::derive(cfg.seed, &[stream::EDGES, g as u64, attempt]));
                for (s, &alg) in algorithms.iter().enumerate() {
                    if stats[s].count() >= target {
                        continue;
                    }
                    match recover(&graph, alg, cfg.spectral) {
                        Ok(est) => {
                            let aligned = align_1d(&est, sample.positions())?;
                            stats[s].push(position_error_d(&aligned.positions, sample.positions())?);
                        }
                        Err(e) if is_disconnection(&e) => retries[s] += 1,
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            Ok([0, 1].map(|s| CurvePoint::from_stats(&stats[s], retries[s])))
        })
        .collect::<Result<_>>()?;
    Ok(RecoveryCurve {
        grid: grid.to_vec(),
        series: algorithms
            .iter()
            .enumerate()
            .map(|(s, &a)| (a, points.iter().map(|p| p[s]).collect()))
            .collect(),
    })
}

/// Distance errors `Delta` of aligned recoveries on fixed positions, one per
/// replica; `None` where the graph could not be embedded.
pub fn recovery_distance_errors(
    cfg: &RiskConfig,
    algorithm: RecoveryAlgorithm,
    replicas: usize,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    let sample = sample_positions(&cfg.density, cfg.n + 1, seed::derive(seed, &[stream::POSITIONS]))?;
    if sample.dim() != 1 {
        return Err(invalid("alignment needs univariate positions"));
    }
    let q = sample.query_index();
    let truth = distances_from_positions(sample.positions(), q)?;
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let graph = sample_graph(&sample, &cfg.link, seed::derive(seed, &[stream::EDGES, r]));
            match recover(&graph, algorithm, cfg.spectral) {
                Ok(est) => {
                    let aligned = align_1d(&est, sample.positions())?;
                    let dist = distances_from_positions(&aligned.positions, q)?;
                    Ok(Some(distance_error_delta(&dist, &truth)?))
                }
                Err(e) if is_disconnection(&e) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

/// Fraction of replicas whose distance error exceeds `M1 tau / 2`; failed
/// embeddings count as failures.
pub fn failure_probability_estimate(
    cfg: &RiskConfig,
    algorithm: RecoveryAlgorithm,
    tau: f64,
    replicas: usize,
    seed: u64,
) -> Result<Estimate> {
    check_replicas(replicas)?;
    let errors = recovery_distance_errors(cfg, algorithm, replicas, seed)?;
    Ok(failure_fraction(&errors, cfg.phi.m1() * tau / 2.0))
}

/// Fraction of `errors` above `threshold`, `None` counting as above.
pub fn failure_fraction(errors: &[Option<f64>], threshold: f64) -> Estimate {
    errors
        .iter()
        .map(|e| match e {
            Some(d) if *d <= threshold => 0.0,
            _ => 1.0,
        })
        .collect::<RunningStats>()
        .estimate()
}

/// ENW risk at a fixed query when every estimated distance is within
/// `M1 tau / 2` of the truth: labels and distance perturbations are redrawn
/// each replica. Returns the risk estimate and the window count `M(tau)`.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_enw_risk(
    density: &DensitySpec,
    n: usize,
    f: &RegressionFunction,
    noise: &NoiseSpec,
    phi: AveragingKernel,
    x: &[f64],
    tau: f64,
    replicas: usize,
    seed: u64,
) -> Result<(Estimate, usize)> {
    check_replicas(replicas)?;
    let sample = LatentSample::with_query(density, n, x, seed::derive(seed, &[stream::POSITIONS]))?;
    let q = sample.query_index();
    let window = oracle::window_count(sample.positions(), q, tau, phi.m1())?;
    let delta = sample.query_distances();
    let radius = phi.m1() * tau / 2.0;
    let target = f.eval(x);
    let errors: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let labels = sample_labels(&sample, f, noise, seed::derive(seed, &[stream::NOISE, r]));
            let mut rng = seed::rng(seed::derive(seed, &[stream::PERTURBATION, r]));
            let est = DistanceEstimate {
                values: delta
                    .iter()
                    .map(|d| (d + oracle::uniform_offset(&mut rng, radius)).max(0.0))
                    .collect(),
            };
            let p = estimators::enw_predict(&est, &labels, phi, tau)?;
            Ok((p.value - target).powi(2))
        })
        .collect::<Result<_>>()?;
    Ok((errors.into_iter().collect::<RunningStats>().estimate(), window))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn risk_cfg(f: RegressionFunction, noise: NoiseSpec, link: LinkKernel) -> RiskConfig {
        RiskConfig {
            n: 40,
            density: DensitySpec::unit_interval(),
            link,
            regression: f,
            noise,
            phi: AveragingKernel::Rectangular,
            tau: Some(0.1),
            spectral: SpectralConfig::default(),
            max_retries: 10,
        }
    }

    #[test]
    fn tags_round_trip() {
        for t in EstimatorTag::ALL {
            assert_eq!(t.as_str().parse::<EstimatorTag>().unwrap(), t);
        }
        assert_eq!(
            "knn".parse::<EstimatorTag>(),
            Err(ExperimentError::UnknownEstimator("knn".into()))
        );
    }

    #[test]
    fn zero_function_has_zero_risk() {
        let link = LinkKernel::new(KernelProfile::Gaussian, 1.0, 0.1).unwrap();
        let cfg = risk_cfg(RegressionFunction::constant(0.0), NoiseSpec::None, link);
        for tag in [EstimatorTag::Gnw, EstimatorTag::Nw] {
            assert_eq!(mc_pointwise_risk(&cfg, tag, &[0.3], 50, 1).unwrap().mean, 0.0);
            assert_eq!(mc_global_risk(&cfg, tag, 50, 1).unwrap().mean, 0.0);
        }
        assert!(mc_pointwise_risk(&cfg, EstimatorTag::Gnw, &[0.3], 1, 1).is_err());
    }

    #[test]
    fn complete_graph_risk_is_sample_mean_risk() {
        // Box link wider than the support: GNW is the mean of all n labels,
        // so its risk is (mean f(x_i) - f(x))^2 + sigma^2 / n for fixed positions.
        let link = LinkKernel::new(KernelProfile::Box, 1.0, 2.0).unwrap();
        let f = RegressionFunction::sine(1.0);
        let noise = NoiseSpec::gaussian(0.5).unwrap();
        let cfg = risk_cfg(f.clone(), noise, link);
        let x = [0.3];
        let est = mc_pointwise_risk(&cfg, EstimatorTag::Gnw, &x, 20_000, 7).unwrap();
        let sample = LatentSample::with_query(&cfg.density, 40, &x, seed::derive(7, &[stream::POSITIONS])).unwrap();
        let mean_f = (0..40).map(|i| f.eval(sample.point(i))).sum::<f64>() / 40.0;
        let exact = (mean_f - f.eval(&x)).powi(2) + 0.5 / 40.0;
        assert!(est.within(exact, 3.0), "{est:?} vs {exact}");
    }

    #[test]
    fn pointwise_risk_bounded_by_proxies() {
        let link = LinkKernel::new(KernelProfile::Box, 1.0, 0.1).unwrap();
        let f = RegressionFunction::sine(1.0);
        let noise = NoiseSpec::gaussian(0.25).unwrap();
        let cfg = RiskConfig { n: 100, ..risk_cfg(f.clone(), noise, link) };
        let x = [0.4];
        let integ = oracle::IntegrationSpec::default_for(1);
        let b = oracle::bias_proxy(&f, &x, &link, &cfg.density, &integ).unwrap();
        let v = oracle::variance_proxy_mc(&f, &x, &link, &cfg.density, &noise, 100, 20_000, 5).unwrap();
        // Pointwise risk averaged over positions is the global risk at fixed x.
        let stats: RunningStats = (0..200u64)
            .map(|s| mc_pointwise_risk(&cfg, EstimatorTag::Gnw, &x, 100, s).unwrap().mean)
            .collect();
        let est = stats.estimate();
        assert!(est.mean <= 2.0 * (v.mean + b * b) + 3.0 * (est.stderr + 2.0 * v.stderr));
    }

    #[test]
    fn global_risk_is_average_of_pointwise() {
        let link = LinkKernel::new(KernelProfile::Box, 1.0, 0.2).unwrap();
        let f = RegressionFunction::sine(1.0);
        let noise = NoiseSpec::gaussian(0.1).unwrap();
        let cfg = risk_cfg(f, noise, link);
        let global = mc_global_risk(&cfg, EstimatorTag::Gnw, 4000, 3).unwrap();
        // Nested oracle: random query points, fresh positions for each.
        let outer: RunningStats = (0..400u64)
            .map(|s| {
                let x = cfg.density.sample_point(&mut seed::rng(seed::derive(99, &[s])));
                mc_pointwise_risk(&cfg, EstimatorTag::Gnw, &x, 10, 1000 + s).unwrap().mean
            })
            .collect();
        let (a, b) = (global, outer.estimate());
        assert!((a.mean - b.mean).abs() <= 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt(), "{a:?} {b:?}");
    }

    #[test]
    fn noiseless_tiny_bandwidth_gives_zero_mse() {
        let cfg = PerturbedNwConfig {
            n: 50,
            noise_variance: 0.0,
            multiples: vec![0.0],
            num_mc: 3,
            num_pts: 4,
            span: 1e6,
            ..PerturbedNwConfig::figure(4)
        };
        let res = run_perturbed_nw_experiment(&cfg).unwrap();
        // The smallest grid bandwidth is far below any point spacing.
        assert!(res.grid[0] < 1e-6);
        assert_eq!(res.curves[0].1[0].mean, Some(0.0));
    }

    #[test]
    fn perturbed_curves_are_deterministic() {
        let cfg = PerturbedNwConfig {
            n: 100,
            num_mc: 4,
            num_pts: 5,
            ..PerturbedNwConfig::figure(8)
        };
        let a = run_perturbed_nw_experiment(&cfg).unwrap();
        assert_eq!(a, run_perturbed_nw_experiment(&cfg).unwrap());
        assert_eq!(a.curves.len(), 3);
        assert!(a.curves.iter().all(|(_, c)| c.iter().all(|p| p.mean.unwrap() >= 0.0)));
    }

    #[test]
    fn unperturbed_curve_is_classical_tradeoff() {
        let res = run_perturbed_nw_experiment(&PerturbedNwConfig {
            num_mc: 10,
            multiples: vec![0.0],
            ..PerturbedNwConfig::figure(12)
        })
        .unwrap();
        let c = &res.curves[0].1;
        let min = curve_minimum(c).unwrap();
        let first = c[0].mean.unwrap();
        let last = c[c.len() - 1].mean.unwrap();
        assert!(min.index > 0 && min.index < c.len() - 1);
        assert!(first > min.mean + 3.0 * c[0].stderr.unwrap());
        assert!(last > min.mean + 3.0 * c[c.len() - 1].stderr.unwrap());
    }

    fn small_sweep(seed: u64) -> SweepConfig {
        SweepConfig {
            n: 80,
            num_mc: 3,
            num_pts: 3,
            max_retries: 2,
            ..SweepConfig::figure(1.0, 0.5, seed)
        }
    }

    #[test]
    fn sweep_is_deterministic_and_nonnegative() {
        let cfg = small_sweep(5);
        let a = run_bias_variance_sweep(&cfg).unwrap();
        assert_eq!(a, run_bias_variance_sweep(&cfg).unwrap());
        assert_eq!(a.curve.series.len(), 3);
        for (_, pts) in &a.curve.series {
            assert_eq!(pts.len(), 3);
            for p in pts {
                assert!(p.num_replicas <= (cfg.num_mc + cfg.max_retries) as u64);
                if let (Some(m), Some(s)) = (p.mean, p.stderr) {
                    assert!(m >= 0.0 && s >= 0.0);
                }
            }
        }
        let gnw = a.curve.series(EstimatorTag::Gnw).unwrap();
        assert!(gnw.iter().all(|p| p.num_replicas == 3 && p.num_retries == 0));
    }

    #[test]
    fn bandwidth_sweep_has_constant_gnw() {
        let cfg = SweepConfig {
            grid: GridKind::BandwidthSweep { h_g: 0.1 },
            ..small_sweep(6)
        };
        let res = run_bias_variance_sweep(&cfg).unwrap();
        assert_eq!(res.curve.series.len(), 4);
        let gnw = res.curve.series(EstimatorTag::Gnw).unwrap();
        assert!(gnw.iter().all(|p| p.mean == gnw[0].mean));
    }

    #[test]
    fn sweep_config_validation() {
        let base = small_sweep(1);
        for bad in [
            SweepConfig { num_mc: 0, ..base.clone() },
            SweepConfig { num_pts: 1, ..base.clone() },
            SweepConfig { noise_variance: -1.0, ..base.clone() },
            SweepConfig {
                density: DensitySpec::uniform(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
                ..base.clone()
            },
        ] {
            assert!(matches!(run_bias_variance_sweep(&bad), Err(ExperimentError::InvalidConfig(_)) | Err(ExperimentError::Model(_))));
        }
    }

    #[test]
    fn recovery_curve_values() {
        let cfg = RecoveryCurveConfig {
            n: 100,
            density: DensitySpec::unit_interval(),
            profile: KernelProfile::Gaussian,
            alpha: 1.0,
            num_mc: 3,
            spectral: SpectralConfig::default(),
            max_retries: 3,
            seed: 2,
        };
        let curve = run_recovery_error_curve(&cfg, &[0.05, 0.2, 50.0]).unwrap();
        for (_, pts) in &curve.series {
            for p in pts.iter().filter(|p| !p.is_missing()) {
                assert!(p.mean.unwrap() >= 0.0 && p.mean.unwrap().is_finite());
            }
        }
        // With a huge length-scale the graph is complete and every hop distance is 1.
        let sp = &curve.series[0].1;
        assert_eq!(sp[2].num_replicas, 3);
    }

    #[test]
    fn failure_probability_limits_and_monotonicity() {
        let link = LinkKernel::new(KernelProfile::Gaussian, 1.0, 0.1).unwrap();
        let cfg = risk_cfg(RegressionFunction::constant(0.0), NoiseSpec::None, link);
        let errs = recovery_distance_errors(&cfg, RecoveryAlgorithm::ShortestPath, 12, 4).unwrap();
        let disconnected = errs.iter().filter(|e| e.is_none()).count() as f64 / 12.0;
        assert_eq!(failure_fraction(&errs, 1e9).mean, disconnected);
        assert_eq!(failure_fraction(&errs, 0.0).mean, 1.0);
        let mut last = 1.0;
        for tau in [0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 10.0] {
            let p = failure_fraction(&errs, tau / 2.0).mean;
            assert!(p <= last);
            last = p;
        }
        let p = failure_probability_estimate(&cfg, RecoveryAlgorithm::ShortestPath, 1e9, 12, 4).unwrap();
        assert_eq!(p.mean, failure_fraction(&errs, 1e9).mean);
    }

    #[test]
    fn synthetic_enw_within_bound() {
        let f = RegressionFunction::sine(1.0);
        let noise = NoiseSpec::gaussian(0.5).unwrap();
        let phi = AveragingKernel::Rectangular;
        let (risk, window) = synthetic_enw_risk(&DensitySpec::unit_interval(), 300, &f, &noise, phi, &[0.5], 0.1, 2000, 3).unwrap();
        let bound = oracle::perturbed_nw_risk_bound(0.1, f.holder_l, f.holder_a, phi.m1(), phi.m2(), 0.5, window);
        assert!(risk.mean <= bound + 3.0 * risk.stderr);
    }
}
