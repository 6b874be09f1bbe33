//! Multi-objective soft-sensor training engine.
//!
//! The crate trains a mixture-of-experts regression network against several
//! quality targets at once, reconciling their conflicting gradients through
//! a Frank–Wolfe min-norm solve on the probability simplex. It contains:
//!
//! - a small taped reverse-mode autodiff engine ([`tape`]) over dense
//!   tensors ([`tensor`]) and grouped parameters ([`params`]);
//! - the expert/gate network ([`model`]);
//! - the Pareto weight solver with executable convergence certificates
//!   ([`solver`]) checked against a brute-force oracle ([`oracle`]);
//! - the tabular data pipeline ([`data`]), metrics ([`metrics`]), training
//!   and ablation harness ([`train`]), and run-artifact writers
//!   ([`report`]).
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below pin the 64-bit production instantiation.

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod params;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod solver;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::SeededRng;

/// Production scalar type: all shipped entry points compute in 64 bits.
pub type Real = f64;

pub type Tensor = tensor::Tensor<Real>;
pub type Tape = tape::Tape<Real>;
pub type ParamStore = params::ParamStore<Real>;
pub type Model = model::Model<Real>;
pub type GradientBundle = solver::GradientBundle<Real>;
pub type GramMatrix = solver::GramMatrix<Real>;
pub type SimplexWeights = solver::SimplexWeights<Real>;
pub type RawSeries = data::RawSeries<Real>;
pub type LaggedDataset = data::LaggedDataset<Real>;
pub type Normalizer = data::Normalizer<Real>;
pub type PreparedData = data::PreparedData<Real>;
pub type MetricsReport = metrics::MetricsReport<Real>;
pub type TrainConfig = train::TrainConfig<Real>;
pub type TrainOutcome = train::TrainOutcome<Real>;
pub type WeightTrajectory = train::WeightTrajectory<Real>;
pub type FWConfig = solver::FWConfig<Real>;
pub type FWDiagnostics = solver::FWDiagnostics<Real>;
pub type ModelConfig = model::ModelConfig;
