//! Node regression on latent position random graphs.
//!
//! A graph on `n + 1` nodes is generated from hidden (latent) positions through a
//! radial link function. The first `n` nodes carry noisy labels and the task is to
//! predict the regression function at node `n + 1` from the graph alone.
//!
//! The crate is organised around the pipeline:
//!
//! * [`model`] samples latent positions, graphs and labels.
//! * [`estimators`] implements Nadaraya-Watson (NW), graphical NW (GNW), NW on
//!   estimated distances (ENW) and cross-validated bandwidth selection.
//! * [`recovery`] estimates latent positions from the adjacency matrix
//!   (shortest paths + classical MDS, optionally after spectral denoising).
//! * [`oracle`] evaluates the analytic quantities (local degree, smoothing
//!   operator, exact GNW expectation, risk bounds) used to check the estimators.
//! * [`experiments`] runs the Monte Carlo risk estimates and the sweep protocols.
//! * [`cli`] ingests JSON configs and writes CSV/SVG results.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod recovery;
pub mod seed;
pub mod stats;

pub use estimators::{AveragingKernel, BandwidthGrid, Prediction};
pub use model::{
    DensitySpec, Graph, KernelProfile, LabelVector, LatentSample, LinkKernel, NoiseSpec,
    RegressionFunction,
};
pub use recovery::{DistanceEstimate, HopDistanceMatrix, PositionEstimate, SpectralConfig};
