//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::estimators::{AveragingKernel, BandwidthGrid};
use crate::experiments::{GridKind, PerturbedNwConfig, RecoveryCurveConfig, SweepConfig};
use crate::model::{DensityKind, DensitySpec, KernelProfile, LinkKernel, NoiseSpec, RegressionFunction, RegressionKind};
use crate::recovery::SpectralConfig;

/// Master seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 1_234_567;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    #[default]
    LengthscaleSweep,
    BandwidthSweep,
}

/// Log-spaced grid `[lower, upper]` with `points` entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

/// Everything a subcommand needs; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Number of labelled nodes; the regression node is added on top.
    pub n: usize,
    #[serde(default = "default_density")]
    pub density: DensityKind,
    pub link: LinkKernel,
    #[serde(default = "default_regression")]
    pub regression: RegressionKind,
    #[serde(default)]
    pub noise_variance: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Latent position of the regression node; sampled from the density when absent.
    #[serde(default)]
    pub query: Option<Vec<f64>>,
    #[serde(default)]
    pub phi: AveragingKernel,
    /// NW / ENW bandwidth for `predict`; leave-one-out when absent.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default = "default_num_mc")]
    pub num_mc: usize,
    #[serde(default = "default_num_pts")]
    pub num_pts: usize,
    #[serde(default)]
    pub sweep: SweepMode,
    #[serde(default)]
    pub linear_grid: bool,
    #[serde(default = "default_span")]
    pub grid_span: f64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default)]
    pub fix_positions: bool,
    #[serde(default = "default_multiples")]
    pub perturbation_multiples: Vec<f64>,
    #[serde(default = "default_recovery_grid")]
    pub recovery_grid: GridSpec,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub plot: bool,
    #[serde(default)]
    pub verbosity: u8,
}

fn default_density() -> DensityKind {
    DensityKind::Uniform {
        lower: vec![0.0],
        upper: vec![1.0],
    }
}

fn default_regression() -> RegressionKind {
    RegressionKind::Sine { m: 1.0 }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_num_mc() -> usize {
    20
}

fn default_num_pts() -> usize {
    50
}

fn default_span() -> f64 {
    BandwidthGrid::DEFAULT_SPAN
}

fn default_retries() -> usize {
    10
}

fn default_multiples() -> Vec<f64> {
    vec![0.0, 1.0, 2.0]
}

fn default_recovery_grid() -> GridSpec {
    GridSpec {
        lower: 0.01,
        upper: 1.0,
        points: 20,
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn density(&self) -> Result<DensitySpec, ConfigError> {
        DensitySpec::from_kind(self.density.clone()).map_err(invalid)
    }

    pub fn regression(&self) -> Result<RegressionFunction, ConfigError> {
        RegressionFunction::from_kind(self.regression.clone(), &self.density()?).map_err(invalid)
    }

    pub fn noise(&self) -> Result<NoiseSpec, ConfigError> {
        NoiseSpec::gaussian(self.noise_variance).map_err(invalid)
    }

    /// Check every field before any computation starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 1 {
            return Err(invalid("n must be at least 1"));
        }
        let density = self.density()?;
        self.link.validate().map_err(invalid)?;
        self.regression()?;
        self.noise()?;
        self.spectral.validate().map_err(invalid)?;
        if let Some(q) = &self.query {
            if q.len() != density.dim() {
                return Err(invalid(format!(
                    "query has dimension {}, density has dimension {}",
                    q.len(),
                    density.dim()
                )));
            }
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) || !t.is_finite() {
                return Err(invalid("tau must be positive"));
            }
        }
        if self.num_mc < 1 {
            return Err(invalid("num_mc must be at least 1"));
        }
        if self.num_pts < 2 {
            return Err(invalid("num_pts must be at least 2"));
        }
        if !(self.grid_span > 1.0) {
            return Err(invalid("grid_span must exceed 1"));
        }
        if self.perturbation_multiples.is_empty() || self.perturbation_multiples.iter().any(|k| !(*k >= 0.0)) {
            return Err(invalid("perturbation_multiples must be non-empty and non-negative"));
        }
        let g = self.recovery_grid;
        if !(g.lower > 0.0 && g.upper >= g.lower && g.points >= 1) {
            return Err(invalid("recovery_grid needs 0 < lower <= upper and at least one point"));
        }
        Ok(())
    }

    pub fn sweep_config(&self) -> Result<SweepConfig, ConfigError> {
        let cfg = SweepConfig {
            n: self.n,
            density: self.density()?,
            profile: self.link.profile,
            alpha: self.link.alpha,
            regression: self.regression()?,
            noise_variance: self.noise_variance,
            num_mc: self.num_mc,
            num_pts: self.num_pts,
            seed: self.seed,
            grid: match self.sweep {
                SweepMode::LengthscaleSweep => GridKind::LengthscaleSweep,
                SweepMode::BandwidthSweep => GridKind::BandwidthSweep { h_g: self.link.h_g },
            },
            linear_grid: self.linear_grid,
            span: self.grid_span,
            spectral: self.spectral,
            max_retries: self.max_retries,
            fix_positions: self.fix_positions,
            phi: self.phi,
        };
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }

    pub fn perturbed_config(&self) -> Result<PerturbedNwConfig, ConfigError> {
        let m = match self.regression {
            RegressionKind::Sine { m } => m,
            _ => return Err(invalid("perturbed-nw needs a sine regression function")),
        };
        if self.density != default_density() {
            return Err(invalid("perturbed-nw uses uniform positions on [0, 1]"));
        }
        let cfg = PerturbedNwConfig {
            n: self.n,
            m,
            noise_variance: self.noise_variance,
            multiples: self.perturbation_multiples.clone(),
            num_mc: self.num_mc,
            num_pts: self.num_pts,
            span: self.grid_span,
            phi: self.phi,
            seed: self.seed,
        };
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }

    pub fn recovery_curve_config(&self) -> Result<(RecoveryCurveConfig, Vec<f64>), ConfigError> {
        let cfg = RecoveryCurveConfig {
            n: self.n,
            density: self.density()?,
            profile: self.link.profile,
            alpha: self.link.alpha,
            num_mc: self.num_mc,
            spectral: self.spectral,
            max_retries: self.max_retries,
            seed: self.seed,
        };
        cfg.validate().map_err(invalid)?;
        let g = self.recovery_grid;
        let grid = if self.linear_grid {
            BandwidthGrid::linear(g.lower, g.upper, g.points)
        } else {
            BandwidthGrid::log_spaced(g.lower, g.upper, g.points)
        }
        .map_err(invalid)?;
        Ok((cfg, grid.values().to_vec()))
    }

    pub fn profile(&self) -> KernelProfile {
        self.link.profile
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"n": 10, "link": {"profile": "box", "alpha": 1.0, "h_g": 0.2}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.num_mc, 20);
        assert_eq!(c.spectral, SpectralConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"n": 10, "link": {"profile": "box", "alpha": 1.0, "h_g": 0.2}, "colour": 1}"#;
        assert!(matches!(RunConfig::from_json(text), Err(ConfigError::Parse(_))));
        let nested = r#"{"n": 10, "link": {"profile": "box", "alpha": 1.0, "h_g": 0.2, "beta": 2}}"#;
        assert!(RunConfig::from_json(nested).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.noise_variance = -1.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.link.alpha = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.query = Some(vec![0.1, 0.2]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        let echoed = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(RunConfig::from_json(&echoed).unwrap(), c);
    }
}
