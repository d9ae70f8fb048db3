//! Soft-Root-Sign activation laboratory: the activation zoo with analytic
//! derivatives, Gaussian output moments, a small reverse-mode MLP stack,
//! training harness and forward-dynamics experiments.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod activation;
pub mod dynamics;
pub mod error;
pub mod gradcheck;
pub mod moments;
pub mod nn;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use activation::{srs_pole_exists, srs_shape, Activation, ActivationKind, SrsShape};
pub use dynamics::{
    iterate_activation, landscape_roughness, output_landscape, GridSpec, Landscape, Trajectory, TrajectoryRecord,
};
pub use error::{Error, Result};
pub use gradcheck::{check_model, GradCheckConfig, GradCheckReport};
pub use moments::{mc_oracle, moments, moments_table, McEstimate, MomentResult, MomentStatus, MomentTable};
pub use nn::Model;
pub use quadrature::{QuadratureConfig, QuadratureRule};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{run_ablation, run_experiment, DatasetSplit, MetricsLog, TrainConfig};

pub type Activation64 = Activation<f64>;
pub type Activation32 = Activation<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;
pub type MomentResult64 = MomentResult<f64>;
pub type MomentResult32 = MomentResult<f32>;
pub type Landscape64 = Landscape<f64>;
pub type Trajectory64 = Trajectory<f64>;
