//! AdEMAMix and friends: a mixture-of-EMAs Adam variant, its warmup
//! schedulers, a family of baseline optimizers, closed-form EMA weight
//! profiles, small differentiable testbeds and a deterministic experiment
//! harness.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root pin the `f64` instantiations used by the harness.

pub mod ema_analysis;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod optimizers;
pub mod scalar;
pub mod schedulers;
pub mod testbeds;

pub use error::{CheckpointError, Error, Result};
pub use numerics::{ParamVec, Rng};
pub use scalar::Scalar;

pub type ParamVector = numerics::ParamVec<f64>;
pub type ScheduleSpec = schedulers::ScheduleSpec<f64>;
pub type AdamWState = optimizers::AdamW<f64>;
pub type AdEMAMixState = optimizers::AdEMAMix<f64>;
pub type OptimizerState = optimizers::OptimizerState<f64>;
pub type StepScalars = optimizers::StepScalars<f64>;
pub type WeightProfile = ema_analysis::WeightProfile<f64>;
pub type SyntheticDataset = testbeds::SyntheticDataset<f64>;
pub type MlpTask = testbeds::MlpTask<f64>;
