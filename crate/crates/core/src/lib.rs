//! Simulation and drift estimation for Ornstein-Uhlenbeck processes driven by
//! Gaussian noises with Hurst exponent below one half.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, with `F32` variants for single precision.

pub mod appendix;
pub mod covariance;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod grid;
pub mod hilbert;
pub mod linalg;
pub mod quadrature;
pub mod scalar;
pub mod simulate;
pub mod special;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Real;

pub type CovarianceModel = covariance::CovarianceModel<f64>;
pub type CovarianceModelF32 = covariance::CovarianceModel<f32>;
pub type GridSpec = grid::GridSpec<f64>;
pub type GridSpecF32 = grid::GridSpec<f32>;
pub type Matrix = linalg::Matrix<f64>;
pub type Estimate = quadrature::Estimate<f64>;
pub type QuadOptions = quadrature::QuadOptions<f64>;
pub type HypothesisReport = covariance::HypothesisReport<f64>;
pub type StepFunction = hilbert::StepFunction<f64>;
pub type HFunction = hilbert::HFunction<f64>;
pub type Kernel2D = hilbert::Kernel2D<f64>;
pub type TensorOptions = hilbert::TensorOptions<f64>;
pub type IncrementGram = simulate::IncrementGram<f64>;
pub type IncrementGramF32 = simulate::IncrementGram<f32>;
pub type GaussianPath = simulate::GaussianPath<f64>;
pub type Trajectory = simulate::Trajectory<f64>;
pub type TrajectoryF32 = simulate::Trajectory<f32>;
pub type AsymptoticConstants = estimators::AsymptoticConstants<f64>;

pub use covariance::ModelSpec;
pub use estimators::EstimateRecord;
pub use experiment::{run_experiment, ExperimentConfig, McSummary};
