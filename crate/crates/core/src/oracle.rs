//! Analytic quantities of the GNW analysis: local edge density, expected
//! degree, the smoothing operator, bias and variance proxies, the exact GNW
//! expectation and the risk bounds.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::estimators::gnw_predict;
use crate::model::{
    sample_graph, sample_labels, unit_ball_volume, DensityKind, DensitySpec, KernelProfile,
    LatentSample, LinkKernel, ModelError, NoiseSpec, Positions, RegressionFunction,
};
use crate::seed::{self, stream};
use crate::stats::{Estimate, RunningStats};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("integration resolution {0} is below the minimum of 100")]
    ResolutionTooLow(usize),
    #[error("point has dimension {got}, density has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} replicas, got {got}")]
    TooFewReplicas { needed: usize, got: usize },
    #[error("bound precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Numerical integration against the latent density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum IntegrationSpec {
    /// Fixed-grid trapezoid rule, univariate only.
    Trapezoid { points: usize },
    /// Plain Monte Carlo with draws from the density.
    MonteCarlo { samples: usize, seed: u64 },
}

impl IntegrationSpec {
    pub const MIN_RESOLUTION: usize = 100;

    pub fn trapezoid(points: usize) -> Result<Self> {
        let s = IntegrationSpec::Trapezoid { points };
        s.validate()?;
        Ok(s)
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Result<Self> {
        let s = IntegrationSpec::MonteCarlo { samples, seed };
        s.validate()?;
        Ok(s)
    }

    /// 10^4-point trapezoid in one dimension, 10^5 Monte Carlo draws otherwise.
    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            IntegrationSpec::Trapezoid { points: 10_000 }
        } else {
            IntegrationSpec::MonteCarlo {
                samples: 100_000,
                seed: 0x0DDB_1A5E,
            }
        }
    }

    pub fn resolution(&self) -> usize {
        match *self {
            IntegrationSpec::Trapezoid { points } => points,
            IntegrationSpec::MonteCarlo { samples, .. } => samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution() < Self::MIN_RESOLUTION {
            Err(OracleError::ResolutionTooLow(self.resolution()))
        } else {
            Ok(())
        }
    }
}

/// Value of an integral and its Monte Carlo standard error (0 for quadrature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Integral {
    pub value: f64,
    pub stderr: f64,
}

fn trapezoid(g: impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let step = (b - a) / (points - 1) as f64;
    let inner: f64 = (1..points - 1).map(|k| g(a + step * k as f64)).sum();
    step * (0.5 * (g(a) + g(b)) + inner)
}

/// `integral weight(z) k(x, z) p(z) dz`.
pub fn kernel_integral(
    x: &[f64],
    link: &LinkKernel,
    density: &DensitySpec,
    integ: &IntegrationSpec,
    weight: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<Integral> {
    integ.validate()?;
    if x.len() != density.dim() {
        return Err(OracleError::DimensionMismatch {
            expected: density.dim(),
            got: x.len(),
        });
    }
    match *integ {
        IntegrationSpec::Trapezoid { points } => {
            if density.dim() != 1 {
                return Err(OracleError::DimensionMismatch {
                    expected: 1,
                    got: density.dim(),
                });
            }
            let reach = link.profile.effective_support() * link.h_g;
            let (lo, hi) = density.effective_bounds()[0];
            // Integrate over the offset from `x` so that window edges are hit exactly.
            let (a, b) = ((lo - x[0]).max(-reach), (hi - x[0]).min(reach));
            let value = trapezoid(
                |t| {
                    let z = [(x[0] + t).clamp(lo, hi)];
                    weight(&z) * link.eval(t.abs()) * density.pdf(&z)
                },
                a,
                b,
                points,
            );
            Ok(Integral { value, stderr: 0.0 })
        }
        IntegrationSpec::MonteCarlo { samples, seed } => {
            let mut rng = seed::rng(seed);
            let mut stats = RunningStats::new();
            for _ in 0..samples {
                let z = density.sample_point(&mut rng);
                stats.push(weight(&z) * link.eval(crate::model::euclidean(x, &z)));
            }
            Ok(Integral {
                value: stats.mean(),
                stderr: stats.stderr(),
            })
        }
    }
}

/// Window `[x - h, x + h]` clipped to the interval, for the box profile on a
/// univariate uniform density.
fn box_uniform_window(x: &[f64], link: &LinkKernel, density: &DensitySpec) -> Option<(f64, f64, f64)> {
    match (&density.kind, link.profile) {
        (DensityKind::Uniform { lower, upper }, KernelProfile::Box) if lower.len() == 1 && x.len() == 1 => {
            let a = (x[0] - link.h_g).max(lower[0]);
            let b = (x[0] + link.h_g).min(upper[0]);
            Some((a, b.max(a), upper[0] - lower[0]))
        }
        _ => None,
    }
}

/// Local edge density `c(x) = integral k(x, z) p(z) dz`.
pub fn local_edge_density(
    x: &[f64],
    link: &LinkKernel,
    density: &DensitySpec,
    integ: &IntegrationSpec,
) -> Result<f64> {
    integ.validate()?;
    if let Some((a, b, width)) = box_uniform_window(x, link, density) {
        return Ok(link.alpha * (b - a) / width);
    }
    Ok(kernel_integral(x, link, density, integ, |_| 1.0)?.value)
}

/// Expected degree `d(x) = n c(x)`.
pub fn expected_degree(
    x: &[f64],
    link: &LinkKernel,
    density: &DensitySpec,
    n: usize,
    integ: &IntegrationSpec,
) -> Result<f64> {
    Ok(n as f64 * local_edge_density(x, link, density, integ)?)
}

/// Smoothing operator `S(f, x)`: the kernel-weighted population mean of `f`
/// around `x`, or 0 where `c(x) = 0`.
pub fn smoothing_operator(
    f: &RegressionFunction,
    x: &[f64],
    link: &LinkKernel,
    density: &DensitySpec,
    integ: &IntegrationSpec,
) -> Result<f64> {
    let c = local_edge_density(x, link, density, integ)?;
    if !(c > 0.0) {
        return Ok(0.0);
    }
    if let Some((a, b, width)) = box_uniform_window(x, link, density) {
        if let (Some(fa), Some(fb)) = (f.antiderivative(a), f.antiderivative(b)) {
            return Ok(link.alpha * (fb - fa) / width / c);
        }
    }
    Ok(kernel_integral(x, link, density, integ, |z| f.eval(z))?.value / c)
}

/// Bias proxy `b(x) = S(f, x) - f(x)`.
pub fn bias_proxy(
    f: &RegressionFunction,
    x: &[f64],
    link: &LinkKernel,
    density: &DensitySpec,
    integ: &IntegrationSpec,
) -> Result<f64> {
    Ok(smoothing_operator(f, x, link, density, integ)? - f.eval(x))
}

/// Exact expectation of GNW at `x`: `S(f, x) (1 - (1 - c(x))^n)`.
pub fn gnw_expectation_oracle(
    f: &RegressionFunction,
    x: &[f64],
    link: &LinkKernel,
    density: &DensitySpec,
    n: usize,
    integ: &IntegrationSpec,
) -> Result<f64> {
    let c = local_edge_density(x, link, density, integ)?;
    let s = smoothing_operator(f, x, link, density, integ)?;
    Ok(s * (1.0 - (1.0 - c).powf(n as f64)))
}

/// GNW predictions at `x` over fresh positions, edges and noise per replica.
#[allow(clippy::too_many_arguments)]
pub fn gnw_monte_carlo(
    f: &RegressionFunction,
    x: &[f64],
    link: &LinkKernel,
    density: &DensitySpec,
    noise: &NoiseSpec,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if x.len() != density.dim() {
        return Err(OracleError::DimensionMismatch {
            expected: density.dim(),
            got: x.len(),
        });
    }
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let sample = LatentSample::with_query(density, n, x, seed::derive(seed, &[stream::POSITIONS, r]))?;
            let graph = sample_graph(&sample, link, seed::derive(seed, &[stream::EDGES, r]));
            let labels = sample_labels(&sample, f, noise, seed::derive(seed, &[stream::NOISE, r]));
            let p = gnw_predict(&graph, &labels, sample.query_index()).expect("labels cover all but the query");
            Ok(p.value)
        })
        .collect()
}

/// Monte Carlo estimate of `v(x) = E[(GNW(x) - S(f, x))^2]`.
#[allow(clippy::too_many_arguments)]
pub fn variance_proxy_mc(
    f: &RegressionFunction,
    x: &[f64],
    link: &LinkKernel,
    density: &DensitySpec,
    noise: &NoiseSpec,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<Estimate> {
    if replicas < 1000 {
        return Err(OracleError::TooFewReplicas {
            needed: 1000,
            got: replicas,
        });
    }
    let s = smoothing_operator(f, x, link, density, &IntegrationSpec::default_for(density.dim()))?;
    let preds = gnw_monte_carlo(f, x, link, density, noise, n, replicas, seed)?;
    Ok(preds.iter().map(|p| (p - s).powi(2)).collect::<RunningStats>().estimate())
}

/// Upper bound on the variance proxy: `(9B^2 + 2 sigma^2) / d(x)`.
pub fn variance_upper_bound(sup_f: f64, noise_variance: f64, degree: f64) -> f64 {
    (9.0 * sup_f * sup_f + 2.0 * noise_variance) / degree
}

/// Lower bound on the variance proxy: `sigma0^2 (1 - e^{-d})^2 / d`.
pub fn variance_lower_bound(min_noise_variance: f64, degree: f64) -> f64 {
    min_noise_variance * (1.0 - (-degree).exp()).powi(2) / degree
}

/// Sup-norm bias bound `2 L M2^a h^a` for compactly supported profiles.
pub fn bias_bound(holder_l: f64, holder_a: f64, m2: f64, h_g: f64) -> f64 {
    2.0 * holder_l * m2.powf(holder_a) * h_g.powf(holder_a)
}

/// Constants of the GNW risk bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundParams {
    pub holder_l: f64,
    pub holder_a: f64,
    /// Sup norm `B` of the regression function.
    pub sup_f: f64,
    pub noise_variance: f64,
    pub m1: f64,
    pub m2: f64,
    /// Density lower bound `p0`.
    pub p0: f64,
    /// Measure-retention constants `c0` and `r0`.
    pub c0: f64,
    pub r0: f64,
    pub dim: usize,
    /// Density Hölder exponent `b` and constant `S`.
    pub density_b: f64,
    pub density_s: f64,
    /// `integral sqrt(p)`.
    pub sqrt_density_integral: f64,
    pub n: usize,
    pub alpha: f64,
}

impl BoundParams {
    pub fn unit_ball_volume(&self) -> f64 {
        unit_ball_volume(self.dim)
    }

    fn noise_factor(&self) -> f64 {
        36.0 * self.sup_f * self.sup_f + 8.0 * self.noise_variance
    }

    /// `(C1, C2)` of the bound for densities bounded below.
    pub fn bound1_constants(&self) -> (f64, f64) {
        let c1 = 4.0 * self.holder_l.powi(2) * self.m2.powf(2.0 * self.holder_a);
        let c2 = self.noise_factor()
            / (self.p0 * self.c0 * self.unit_ball_volume() * self.m1.powi(self.dim as i32));
        (c1, c2)
    }

    /// `(C1, C2)` of the bound for Hölder densities.
    pub fn bound2_constants(&self) -> (f64, f64) {
        let (bias, _) = self.bound1_constants();
        let c1 = bias
            + (8.0 * self.sup_f.powi(2) + 2.0 * self.noise_variance)
                * self.density_s.sqrt()
                * self.m1.powf(self.density_b / 2.0)
                * self.sqrt_density_integral;
        let c2 = self.noise_factor()
            / (self.c0
                * self.unit_ball_volume()
                * self.density_s
                * self.m1.powf(self.dim as f64 + self.density_b));
        (c1, c2)
    }
}

/// `C1 h^{2a} + C2 / (n alpha h^d)`, valid while `M1 h < r0`.
pub fn risk_bound_1(h_g: f64, params: &BoundParams) -> Result<f64> {
    if !(params.m1 * h_g < params.r0) {
        return Err(OracleError::Precondition(format!(
            "M1 h_g = {} must be below r0 = {}",
            params.m1 * h_g,
            params.r0
        )));
    }
    let (c1, c2) = params.bound1_constants();
    Ok(c1 * h_g.powf(2.0 * params.holder_a)
        + c2 / (params.n as f64 * params.alpha * h_g.powi(params.dim as i32)))
}

/// `C1 h^{min(2a, b/2)} + C2 / (n alpha h^{d+b})`, valid while `h < min(r0/M1, 1)`.
pub fn risk_bound_2(h_g: f64, params: &BoundParams) -> Result<f64> {
    let limit = (params.r0 / params.m1).min(1.0);
    if !(h_g < limit) {
        return Err(OracleError::Precondition(format!("h_g = {h_g} must be below {limit}")));
    }
    let (c1, c2) = params.bound2_constants();
    let exponent = (2.0 * params.holder_a).min(params.density_b / 2.0);
    Ok(c1 * h_g.powf(exponent)
        + c2 / (params.n as f64 * params.alpha * h_g.powf(params.dim as f64 + params.density_b)))
}

/// Number of labelled points within `M1 tau / 2` of the query.
pub fn window_count(positions: &Positions, query: usize, tau: f64, m1: f64) -> Result<usize> {
    if query >= positions.len() {
        return Err(OracleError::Model(ModelError::NodeOutOfRange {
            index: query,
            n_nodes: positions.len(),
        }));
    }
    let radius = m1 * tau / 2.0;
    Ok((0..positions.len())
        .filter(|&i| i != query && positions.distance(i, query) <= radius)
        .count())
}

/// Risk bound for NW on distances known to within `M1 tau / 2`:
/// `2 L^2 (M1/2 + M2)^{2a} tau^{2a} + 4 sigma^2 / M(tau)`.
pub fn perturbed_nw_risk_bound(
    tau: f64,
    holder_l: f64,
    holder_a: f64,
    m1: f64,
    m2: f64,
    noise_variance: f64,
    window: usize,
) -> f64 {
    let c1 = 2.0 * holder_l.powi(2) * (m1 / 2.0 + m2).powf(2.0 * holder_a);
    c1 * tau.powf(2.0 * holder_a) + 4.0 * noise_variance / window as f64
}

/// Uniform draw of a perturbation in `[-radius, radius]`.
pub fn uniform_offset(rng: &mut seed::Rng, radius: f64) -> f64 {
    radius * (2.0 * rng.gen::<f64>() - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_positions;

    fn unit() -> DensitySpec {
        DensitySpec::unit_interval()
    }

    fn link(profile: KernelProfile, alpha: f64, h: f64) -> LinkKernel {
        LinkKernel::new(profile, alpha, h).unwrap()
    }

    fn quad() -> IntegrationSpec {
        IntegrationSpec::default_for(1)
    }

    #[test]
    fn resolution_floor() {
        assert_eq!(IntegrationSpec::trapezoid(99), Err(OracleError::ResolutionTooLow(99)));
        assert!(IntegrationSpec::trapezoid(100).is_ok());
        let bad = IntegrationSpec::Trapezoid { points: 10 };
        let k = link(KernelProfile::Gaussian, 1.0, 0.1);
        assert!(local_edge_density(&[0.5], &k, &unit(), &bad).is_err());
    }

    #[test]
    fn box_density_examples() {
        let k = link(KernelProfile::Box, 1.0, 0.2);
        assert!((local_edge_density(&[0.5], &k, &unit(), &quad()).unwrap() - 0.4).abs() < 1e-15);
        assert!((local_edge_density(&[0.0], &k, &unit(), &quad()).unwrap() - 0.2).abs() < 1e-15);
        // The quadrature route agrees with the closed form.
        let q = kernel_integral(&[0.5], &k, &unit(), &quad(), |_| 1.0).unwrap();
        assert!((q.value - 0.4).abs() < 1e-12);
    }

    #[test]
    fn gaussian_density_grid_refinement() {
        let k = link(KernelProfile::Gaussian, 1.0, 0.1);
        let coarse = local_edge_density(&[0.5], &k, &unit(), &quad()).unwrap();
        let fine = local_edge_density(&[0.5], &k, &unit(), &IntegrationSpec::trapezoid(100_000).unwrap()).unwrap();
        assert!((coarse - fine).abs() < 1e-6);
        // Far from the boundary this is the full Gaussian integral h sqrt(pi).
        assert!((fine - 0.1 * std::f64::consts::PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn degree_examples() {
        let k = link(KernelProfile::Box, 1.0, 0.2);
        assert!((expected_degree(&[0.5], &k, &unit(), 100, &quad()).unwrap() - 40.0).abs() < 1e-12);
        let half = link(KernelProfile::Box, 0.5, 0.2);
        let full = expected_degree(&[0.3], &k, &unit(), 100, &quad()).unwrap();
        let halved = expected_degree(&[0.3], &half, &unit(), 100, &quad()).unwrap();
        assert!((halved - full / 2.0).abs() < 1e-12);
    }

    #[test]
    fn degree_matches_empirical_mean() {
        let k = link(KernelProfile::Gaussian, 0.7, 0.1);
        let n = 60;
        let d = expected_degree(&[0.3], &k, &unit(), n, &quad()).unwrap();
        let stats: RunningStats = (0..2000u64)
            .map(|r| {
                let s = LatentSample::with_query(&unit(), n, &[0.3], seed::derive(9, &[1, r])).unwrap();
                let g = sample_graph(&s, &k, seed::derive(9, &[2, r]));
                crate::model::empirical_degree(&g, n).unwrap() as f64
            })
            .collect();
        assert!(stats.estimate().within(d, 3.0), "{:?} vs {d}", stats.estimate());
    }

    #[test]
    fn operator_examples() {
        let k = link(KernelProfile::Box, 1.0, 0.2);
        let c = RegressionFunction::constant(2.5);
        assert!((smoothing_operator(&c, &[0.3], &k, &unit(), &quad()).unwrap() - 2.5).abs() < 1e-12);
        let id = RegressionFunction::linear(1.0, 0.0, 1.0);
        assert!((smoothing_operator(&id, &[0.4], &k, &unit(), &quad()).unwrap() - 0.4).abs() < 1e-12);
        assert!(bias_proxy(&id, &[0.4], &k, &unit(), &quad()).unwrap().abs() < 1e-12);
        assert!(bias_proxy(&c, &[0.9], &k, &unit(), &quad()).unwrap().abs() < 1e-12);
        // Near the boundary the window is one-sided: mean of z over [0, 0.2].
        assert!((smoothing_operator(&id, &[0.0], &k, &unit(), &quad()).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn operator_vanishes_without_mass() {
        let d = DensitySpec::uniform(vec![0.0], vec![1.0]).unwrap();
        let k = link(KernelProfile::Box, 1.0, 0.1);
        let c = RegressionFunction::constant(3.0);
        assert_eq!(smoothing_operator(&c, &[1.5], &k, &d, &quad()).unwrap(), 0.0);
        assert_eq!(gnw_expectation_oracle(&c, &[1.5], &k, &d, 10, &quad()).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_agrees_with_quadrature_for_sine() {
        let k = link(KernelProfile::Box, 1.0, 0.15);
        let f = RegressionFunction::sine(1.0);
        for x in [0.05, 0.25, 0.6] {
            let closed = smoothing_operator(&f, &[x], &k, &unit(), &quad()).unwrap();
            let c = local_edge_density(&[x], &k, &unit(), &quad()).unwrap();
            let q = kernel_integral(&[x], &k, &unit(), &quad(), |z| f.eval(z)).unwrap().value / c;
            assert!((closed - q).abs() < 1e-7);
        }
    }

    #[test]
    fn operator_bounded_by_sup_norm() {
        let f = RegressionFunction::sine(2.0);
        for profile in [KernelProfile::Box, KernelProfile::Gaussian, KernelProfile::TruncatedGaussian] {
            let k = link(profile, 1.0, 0.3);
            for i in 0..=20 {
                let x = i as f64 / 20.0;
                assert!(smoothing_operator(&f, &[x], &k, &unit(), &quad()).unwrap().abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn multivariate_monte_carlo_integral() {
        let d = DensitySpec::uniform(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let k = link(KernelProfile::Box, 1.0, 0.2);
        let i = kernel_integral(&[0.5, 0.5], &k, &d, &IntegrationSpec::default_for(2), |_| 1.0).unwrap();
        let exact = std::f64::consts::PI * 0.04;
        assert!((i.value - exact).abs() < 3.0 * i.stderr, "{i:?}");
    }

    #[test]
    fn expectation_limits() {
        let k = link(KernelProfile::Box, 1.0, 0.1);
        let f = RegressionFunction::sine(1.0);
        let s = smoothing_operator(&f, &[0.3], &k, &unit(), &quad()).unwrap();
        let e = gnw_expectation_oracle(&f, &[0.3], &k, &unit(), 1_000_000, &quad()).unwrap();
        assert!((e - s).abs() < 1e-9);
    }

    #[test]
    fn expectation_matches_monte_carlo_off_centre() {
        let k = link(KernelProfile::Box, 1.0, 0.1);
        let f = RegressionFunction::sine(1.0);
        let noise = NoiseSpec::gaussian(0.25).unwrap();
        let target = gnw_expectation_oracle(&f, &[0.25], &k, &unit(), 20, &quad()).unwrap();
        let preds = gnw_monte_carlo(&f, &[0.25], &k, &unit(), &noise, 20, 40_000, 17).unwrap();
        let est = preds.into_iter().collect::<RunningStats>().estimate();
        assert!(est.within(target, 3.0), "{est:?} vs {target}");
    }

    #[test]
    fn variance_of_constant_without_noise_is_no_edge_mass() {
        let k = link(KernelProfile::Box, 1.0, 0.05);
        let f = RegressionFunction::constant(1.0);
        let n = 20;
        let c = local_edge_density(&[0.5], &k, &unit(), &quad()).unwrap();
        let exact = (1.0 - c).powi(n as i32);
        let v = variance_proxy_mc(&f, &[0.5], &k, &unit(), &NoiseSpec::None, n, 20_000, 3).unwrap();
        assert!(v.within(exact, 3.0), "{v:?} vs {exact}");
        assert!(variance_proxy_mc(&f, &[0.5], &k, &unit(), &NoiseSpec::None, n, 10, 3).is_err());
    }

    #[test]
    fn risk_bound_1_spot_value() {
        let p = BoundParams {
            holder_l: 1.0,
            holder_a: 1.0,
            sup_f: 1.0,
            noise_variance: 1.0,
            m1: 1.0,
            m2: 1.0,
            p0: 1.0,
            c0: 1.0,
            r0: 1.0,
            dim: 1,
            density_b: 1.0,
            density_s: 1.0,
            sqrt_density_integral: 1.0,
            n: 500,
            alpha: 1.0,
        };
        // 4 * 0.01 + (36 + 8) / (1 * 1 * 2 * 1) / (500 * 0.1)
        assert!((risk_bound_1(0.1, &p).unwrap() - 0.48).abs() < 1e-12);
        let doubled = BoundParams { n: 1000, ..p };
        let (c1, _) = p.bound1_constants();
        let second = |q: &BoundParams| risk_bound_1(0.1, q).unwrap() - c1 * 0.01;
        assert!((second(&doubled) - second(&p) / 2.0).abs() < 1e-12);
        assert!(risk_bound_1(1.0, &p).is_err());
    }

    #[test]
    fn risk_bound_1_minimiser() {
        let p = BoundParams {
            holder_l: 2.0,
            holder_a: 1.0,
            sup_f: 1.0,
            noise_variance: 0.5,
            m1: 1.0,
            m2: 1.0,
            p0: 1.0,
            c0: 0.5,
            r0: 1.0,
            dim: 1,
            density_b: 1.0,
            density_s: 1.0,
            sqrt_density_integral: 1.0,
            n: 500,
            alpha: 1.0,
        };
        let (c1, c2) = p.bound1_constants();
        let closed = (c2 / (2.0 * c1 * 500.0)).powf(1.0 / 3.0);
        let grid_best = (1..100_000)
            .map(|k| k as f64 * 1e-5)
            .min_by(|a, b| risk_bound_1(*a, &p).unwrap().total_cmp(&risk_bound_1(*b, &p).unwrap()))
            .unwrap();
        assert!((grid_best - closed).abs() < 2e-5);
    }

    #[test]
    fn risk_bound_2_spot_value() {
        let p = BoundParams {
            holder_l: 1.0,
            holder_a: 1.0,
            sup_f: 1.0,
            noise_variance: 1.0,
            m1: 1.0,
            m2: 1.0,
            p0: 1.0,
            c0: 1.0,
            r0: 1.0,
            dim: 1,
            density_b: 1.0,
            density_s: 1.0,
            sqrt_density_integral: 1.0,
            n: 100,
            alpha: 1.0,
        };
        // C1 = 4 + 10, exponent min(2, 1/2); C2 = 44 / 2, h^{d+b} = 0.25.
        let want = 14.0 * 0.5f64.sqrt() + 22.0 / 25.0;
        assert!((risk_bound_2(0.5, &p).unwrap() - want).abs() < 1e-12);
        // The variance term is never smaller than the one of the first bound.
        let b1 = p.bound1_constants().1 / (100.0 * 0.5);
        assert!(p.bound2_constants().1 / (100.0 * 0.25) >= b1);
        assert!(risk_bound_2(1.0, &p).is_err());
    }

    #[test]
    fn bias_bound_on_grid() {
        let f = RegressionFunction::sine(1.0);
        for profile in [KernelProfile::Box, KernelProfile::TruncatedGaussian] {
            for h in [0.05, 0.1] {
                let k = link(profile, 1.0, h);
                let bound = bias_bound(f.holder_l, f.holder_a, profile.m2(), h);
                for i in 1..50 {
                    let x = i as f64 / 50.0;
                    assert!(bias_proxy(&f, &[x], &k, &unit(), &quad()).unwrap().abs() <= bound);
                }
            }
        }
    }

    #[test]
    fn inverse_degree_bound() {
        // Uniform [0, 1]: p0(x) = 1, c0 = 1/2, v_1 = 2.
        for profile in [KernelProfile::Box, KernelProfile::TruncatedGaussian, KernelProfile::Gaussian] {
            for h in [0.02, 0.1, 0.3] {
                let k = link(profile, 0.8, h);
                for x in [0.0, 0.3, 0.5, 1.0] {
                    let d = expected_degree(&[x], &k, &unit(), 200, &quad()).unwrap();
                    let rhs = 2.0 / (0.5 * 2.0 * profile.m1() * 200.0 * 0.8 * h);
                    assert!(1.0 / d <= rhs + 1e-12, "{profile:?} {h} {x}");
                }
            }
        }
    }

    #[test]
    fn window_count_examples() {
        let s = sample_positions(&unit(), 1001, 12).unwrap();
        let mut coords = s.positions().coords().to_vec();
        coords[1000] = 0.5;
        let pos = Positions::from_1d(coords);
        assert_eq!(window_count(&pos, 1000, 100.0, 1.0).unwrap(), 1000);
        assert_eq!(window_count(&pos, 1000, 0.0, 1.0).unwrap(), 0);
        let m = window_count(&pos, 1000, 0.2, 1.0).unwrap() as f64;
        let sd = (1000.0 * 0.2 * 0.8f64).sqrt();
        assert!((m - 200.0).abs() <= 3.0 * sd);
        assert!(window_count(&pos, 1001, 0.2, 1.0).is_err());
    }

    #[test]
    fn perturbed_bound_value() {
        // 2 * 1 * 1.5^2 * 0.01 + 4 * 0.5 / 20
        let v = perturbed_nw_risk_bound(0.1, 1.0, 1.0, 1.0, 1.0, 0.5, 20);
        assert!((v - (0.045 + 0.1)).abs() < 1e-12);
    }
}
