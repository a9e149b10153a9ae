//! Command-line front end: configuration, subcommand dispatch and result files.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 disconnected graph, 4 I/O error.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::estimators::{enw_predict, gnw_predict, loocv_bandwidth, nw_predict, BandwidthGrid, Prediction};
use crate::experiments::{
    run_bias_variance_sweep, run_perturbed_nw_experiment, run_recovery_error_curve, EstimatorTag,
    ExperimentError,
};
use crate::model::{sample_graph, sample_labels, sample_positions, Graph, LabelVector, LatentSample, Positions};
use crate::recovery::{
    align_1d, distance_error_delta, distances_from_positions, position_error_d, recover_sp,
    recover_spectral, DistanceEstimate, PositionEstimate, RecoveryAlgorithm, RecoveryError,
};
use crate::seed::{self, stream};
use config::{ConfigError, RunConfig};
use output::{num, opt_num, Series, Table};

#[derive(Debug, Parser)]
#[command(name = "lpm", version, about = "Regression on latent position graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample positions, graph and labels.
    Sample(Common),
    /// Predict the label of the regression node.
    Predict {
        #[command(flatten)]
        common: Common,
        /// One of gnw, nw, enw-sp, enw-spectral.
        #[arg(long)]
        estimator: String,
        /// Feed true distances to the ENW estimators instead of recovered ones.
        #[arg(long)]
        oracle_distances: bool,
    },
    /// Recover latent positions from the graph.
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        algorithm: AlgorithmArg,
    },
    /// GNW / ENW bias-variance sweep.
    Sweep(Common),
    /// NW smoothing error under perturbed design points.
    PerturbedNw(Common),
    /// Recovery error against the graph length-scale.
    RecoveryCurve(Common),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Sp,
    Spectral,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, or `entropy` for a fresh random one.
    #[arg(long)]
    seed: Option<SeedArg>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
    /// Spectral threshold q.
    #[arg(long)]
    q: Option<f64>,
    /// Spectral eigenvalue tolerance.
    #[arg(long)]
    rho0: Option<f64>,
    /// Linearly instead of logarithmically spaced grids.
    #[arg(long)]
    linear_grid: bool,
}

#[derive(Debug, Clone, Copy)]
enum SeedArg {
    Fixed(u64),
    Entropy,
}

impl std::str::FromStr for SeedArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "entropy" {
            Ok(SeedArg::Entropy)
        } else {
            s.parse().map(SeedArg::Fixed).map_err(|_| format!("`{s}` is neither a u64 nor `entropy`"))
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Disconnected(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Disconnected(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { source, .. } if source.kind() != io::ErrorKind::NotFound => CliError::Io(source),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<RecoveryError> for CliError {
    fn from(e: RecoveryError) -> Self {
        match e {
            RecoveryError::Disconnected | RecoveryError::DisconnectedThreshold { .. } => {
                CliError::Disconnected(e.to_string())
            }
            e => CliError::Failed(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidConfig(_) | ExperimentError::UnknownEstimator(_) => CliError::Config(e.to_string()),
            ExperimentError::RetriesExhausted { .. } => CliError::Disconnected(e.to_string()),
            ExperimentError::Recovery(r) => r.into(),
            e => CliError::Failed(e.to_string()),
        }
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// Parse `std::env::args` and run; returns the process exit code.
pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Load, override and validate the configuration, then echo it.
fn prepare(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    match common.seed {
        Some(SeedArg::Fixed(s)) => cfg.seed = s,
        Some(SeedArg::Entropy) => cfg.seed = rand::random(),
        None => {}
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.plot |= common.plot;
    cfg.linear_grid |= common.linear_grid;
    if let Some(q) = common.q {
        cfg.spectral.q = q;
    }
    if let Some(rho0) = common.rho0 {
        cfg.spectral.rho0 = rho0;
    }
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let echo = serde_json::to_string_pretty(&cfg).map_err(failed)?;
    fs::write(cfg.out_dir.join("config.echo.json"), echo + "\n")?;
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Sample(common) => cmd_sample(&prepare(&common)?),
        Command::Predict {
            common,
            estimator,
            oracle_distances,
        } => {
            let tag: EstimatorTag = estimator.parse()?;
            cmd_predict(&prepare(&common)?, tag, oracle_distances)
        }
        Command::Recover { common, algorithm } => {
            let algorithm = match algorithm {
                AlgorithmArg::Sp => RecoveryAlgorithm::ShortestPath,
                AlgorithmArg::Spectral => RecoveryAlgorithm::Spectral,
            };
            cmd_recover(&prepare(&common)?, algorithm)
        }
        Command::Sweep(common) => cmd_sweep(&prepare(&common)?),
        Command::PerturbedNw(common) => cmd_perturbed_nw(&prepare(&common)?),
        Command::RecoveryCurve(common) => cmd_recovery_curve(&prepare(&common)?),
    }
}

/// Positions of all `n + 1` nodes, the graph and the labels of the first `n`.
struct World {
    sample: LatentSample,
    graph: Graph,
    labels: LabelVector,
}

fn sample_world(cfg: &RunConfig) -> Result<World, CliError> {
    let density = cfg.density()?;
    let pos_seed = seed::derive(cfg.seed, &[stream::POSITIONS]);
    let sample = match &cfg.query {
        Some(q) => LatentSample::with_query(&density, cfg.n, q, pos_seed),
        None => sample_positions(&density, cfg.n + 1, pos_seed),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    let graph = sample_graph(&sample, &cfg.link, seed::derive(cfg.seed, &[stream::EDGES]));
    let labels = sample_labels(&sample, &cfg.regression()?, &cfg.noise()?, seed::derive(cfg.seed, &[stream::NOISE]));
    Ok(World { sample, graph, labels })
}

fn position_table(positions: &Positions, extra: &[(&str, Vec<String>)]) -> Table {
    let mut header = vec!["node_id".to_string()];
    header.extend((1..=positions.dim()).map(|k| format!("x_{k}")));
    header.extend(extra.iter().map(|(h, _)| h.to_string()));
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&refs);
    for (i, p) in positions.points().enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(p.iter().map(|&v| num(v)));
        row.extend(extra.iter().map(|(_, col)| col[i].clone()));
        t.row(&row);
    }
    t
}

fn cmd_sample(cfg: &RunConfig) -> Result<(), CliError> {
    let world = sample_world(cfg)?;
    let out = &cfg.out_dir;
    position_table(world.sample.positions(), &[]).write(&out.join("positions.csv"))?;
    let mut edges = Table::new(&["i", "j"]);
    for (i, j) in world.graph.edges() {
        edges.row(&[(i + 1).to_string(), (j + 1).to_string()]);
    }
    edges.write(&out.join("edges.csv"))?;
    let mut labels = Table::new(&["node_id", "y"]);
    for (i, y) in world.labels.values.iter().enumerate() {
        labels.row(&[(i + 1).to_string(), num(*y)]);
    }
    labels.write(&out.join("labels.csv"))?;
    println!(
        "sampled {} nodes, {} edges, seed {}",
        world.sample.n_nodes(),
        world.graph.edge_count(),
        cfg.seed
    );
    Ok(())
}

fn recover_positions(graph: &Graph, cfg: &RunConfig, algorithm: RecoveryAlgorithm, dim: usize) -> Result<PositionEstimate, CliError> {
    Ok(match algorithm {
        RecoveryAlgorithm::Spectral => recover_spectral(graph, cfg.spectral, dim)?,
        _ => recover_sp(graph, dim)?,
    })
}

/// Bandwidth from the config, else leave-one-out over the labelled points.
fn bandwidth(cfg: &RunConfig, positions: &Positions, labels: &LabelVector) -> Result<f64, CliError> {
    if let Some(t) = cfg.tau {
        return Ok(t);
    }
    let n = labels.len();
    let labelled = Positions::from_points(positions.dim(), positions.points().take(n));
    loocv_bandwidth(&labelled, &labels.values, cfg.phi, &BandwidthGrid::fallback()).map_err(failed)
}

fn cmd_predict(cfg: &RunConfig, tag: EstimatorTag, oracle_distances: bool) -> Result<(), CliError> {
    let world = sample_world(cfg)?;
    let q = world.sample.query_index();
    let truth = DistanceEstimate {
        values: world.sample.query_distances(),
    };
    let pred: Prediction = match tag {
        EstimatorTag::Gnw => gnw_predict(&world.graph, &world.labels, q).map_err(failed)?,
        EstimatorTag::Nw => {
            let tau = bandwidth(cfg, world.sample.positions(), &world.labels)?;
            nw_predict(&truth.values, &world.labels, cfg.phi, tau).map_err(failed)?
        }
        EstimatorTag::EnwSp | EstimatorTag::EnwSpectral if oracle_distances => {
            let tau = bandwidth(cfg, world.sample.positions(), &world.labels)?;
            enw_predict(&truth, &world.labels, cfg.phi, tau).map_err(failed)?
        }
        EstimatorTag::EnwSp | EstimatorTag::EnwSpectral => {
            let algorithm = if tag == EstimatorTag::EnwSp {
                RecoveryAlgorithm::ShortestPath
            } else {
                RecoveryAlgorithm::Spectral
            };
            let est = recover_positions(&world.graph, cfg, algorithm, world.sample.dim())?;
            let tau = bandwidth(cfg, &est.positions, &world.labels)?;
            let dist = distances_from_positions(&est.positions, q)?;
            enw_predict(&dist, &world.labels, cfg.phi, tau).map_err(failed)?
        }
    };
    let mut t = Table::new(&["estimator", "value", "denominator_positive", "seed"]);
    t.row(&[
        tag.to_string(),
        num(pred.value),
        pred.denominator_positive.to_string(),
        cfg.seed.to_string(),
    ]);
    t.write(&cfg.out_dir.join("prediction.csv"))?;
    println!("{tag} {} {}", num(pred.value), pred.denominator_positive);
    Ok(())
}

fn cmd_recover(cfg: &RunConfig, algorithm: RecoveryAlgorithm) -> Result<(), CliError> {
    let world = sample_world(cfg)?;
    let truth = world.sample.positions();
    let est = recover_positions(&world.graph, cfg, algorithm, world.sample.dim())?;
    // Alignment is univariate only; higher dimensions are compared as recovered.
    let aligned = if truth.dim() == 1 {
        align_1d(&est, truth)?.positions
    } else {
        est.positions.clone()
    };
    let errors: Vec<String> = (0..truth.len())
        .map(|i| num(crate::model::euclidean(aligned.point(i), truth.point(i))))
        .collect();
    let aligned_cols: Vec<(String, Vec<String>)> = (0..truth.dim())
        .map(|k| (format!("aligned_{}", k + 1), aligned.coordinate(k).into_iter().map(num).collect()))
        .collect();
    let mut extra: Vec<(&str, Vec<String>)> = aligned_cols.iter().map(|(h, c)| (h.as_str(), c.clone())).collect();
    extra.push(("error", errors));
    position_table(&est.positions, &extra).write(&cfg.out_dir.join("recovered_positions.csv"))?;

    let q = world.sample.query_index();
    let delta = distance_error_delta(
        &distances_from_positions(&aligned, q)?,
        &distances_from_positions(truth, q)?,
    )?;
    let d = position_error_d(&aligned, truth)?;
    let name = algorithm_name(algorithm);
    let mut t = Table::new(&["algorithm", "delta", "position_error_d", "rank", "seed"]);
    t.row(&[
        name.to_string(),
        num(delta),
        num(d),
        est.rank.map_or_else(|| "NA".to_string(), |r| r.to_string()),
        cfg.seed.to_string(),
    ]);
    t.write(&cfg.out_dir.join("recovery_error.csv"))?;
    println!("{name}: delta {} D {}", num(delta), num(d));
    Ok(())
}

fn algorithm_name(a: RecoveryAlgorithm) -> &'static str {
    match a {
        RecoveryAlgorithm::Spectral => "spectral",
        RecoveryAlgorithm::ShortestPath => "sp",
        RecoveryAlgorithm::ClassicalMds => "mds",
    }
}

fn write_plot(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> Result<(), CliError> {
    fs::write(path, output::line_plot(title, x_label, y_label, series, log_x))?;
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let sweep = cfg.sweep_config()?;
    let res = run_bias_variance_sweep(&sweep)?;
    let mut t = Table::new(&["grid_value", "estimator", "mse_mean", "mse_stderr", "num_replicas", "num_retries", "seed"]);
    for (k, g) in res.curve.grid.iter().enumerate() {
        for (tag, points) in &res.curve.series {
            let p = points[k];
            t.row(&[
                num(*g),
                tag.to_string(),
                opt_num(p.mean),
                opt_num(p.stderr),
                p.num_replicas.to_string(),
                p.num_retries.to_string(),
                cfg.seed.to_string(),
            ]);
        }
    }
    t.write(&cfg.out_dir.join("curves.csv"))?;
    if cfg.plot {
        let series: Vec<Series> = res
            .curve
            .series
            .iter()
            .map(|(tag, pts)| Series {
                name: tag.to_string(),
                points: res.curve.grid.iter().zip(pts).map(|(g, p)| (*g, p.mean)).collect(),
            })
            .collect();
        let x_label = match cfg.sweep {
            config::SweepMode::LengthscaleSweep => "length-scale h_g",
            config::SweepMode::BandwidthSweep => "bandwidth tau",
        };
        write_plot(&cfg.out_dir.join("curves.svg"), "In-sample MSE", x_label, "MSE", &series, !cfg.linear_grid)?;
    }
    println!("tau_cv {} ({} grid points)", num(res.tau_cv), res.curve.grid.len());
    Ok(())
}

fn cmd_perturbed_nw(cfg: &RunConfig) -> Result<(), CliError> {
    let res = run_perturbed_nw_experiment(&cfg.perturbed_config()?)?;
    let mut t = Table::new(&["tau", "multiple", "delta", "mse_mean", "mse_stderr", "num_replicas", "seed"]);
    for (k, tau) in res.grid.iter().enumerate() {
        for (multiple, points) in &res.curves {
            let p = points[k];
            t.row(&[
                num(*tau),
                num(*multiple),
                num(multiple * res.tau_star),
                opt_num(p.mean),
                opt_num(p.stderr),
                p.num_replicas.to_string(),
                cfg.seed.to_string(),
            ]);
        }
    }
    t.write(&cfg.out_dir.join("perturbed_nw.csv"))?;
    if cfg.plot {
        let series: Vec<Series> = res
            .curves
            .iter()
            .map(|(k, pts)| Series {
                name: format!("delta = {k} tau*"),
                points: res.grid.iter().zip(pts).map(|(g, p)| (*g, p.mean)).collect(),
            })
            .collect();
        write_plot(&cfg.out_dir.join("perturbed_nw.svg"), "NW under perturbation", "bandwidth tau", "MSE", &series, true)?;
    }
    println!("tau* {}", num(res.tau_star));
    Ok(())
}

fn cmd_recovery_curve(cfg: &RunConfig) -> Result<(), CliError> {
    let (rc, grid) = cfg.recovery_curve_config()?;
    let res = run_recovery_error_curve(&rc, &grid)?;
    let mut t = Table::new(&["h_g", "algorithm", "d_mean", "d_stderr", "num_replicas", "num_retries", "seed"]);
    for (k, h) in res.grid.iter().enumerate() {
        for (alg, points) in &res.series {
            let p = points[k];
            t.row(&[
                num(*h),
                algorithm_name(*alg).to_string(),
                opt_num(p.mean),
                opt_num(p.stderr),
                p.num_replicas.to_string(),
                p.num_retries.to_string(),
                cfg.seed.to_string(),
            ]);
        }
    }
    t.write(&cfg.out_dir.join("recovery_curve.csv"))?;
    if cfg.plot {
        let series: Vec<Series> = res
            .series
            .iter()
            .map(|(alg, pts)| Series {
                name: algorithm_name(*alg).to_string(),
                points: res.grid.iter().zip(pts).map(|(g, p)| (*g, p.mean)).collect(),
            })
            .collect();
        write_plot(&cfg.out_dir.join("recovery_curve.svg"), "Recovery error", "length-scale h_g", "D", &series, !cfg.linear_grid)?;
    }
    println!("{} grid points", res.grid.len());
    Ok(())
}
