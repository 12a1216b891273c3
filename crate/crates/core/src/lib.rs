//! Adaptive multi-round sampling for group-based policy-gradient training.
//!
//! Prompts are sampled over several rounds and retired by successive
//! elimination once their pool satisfies an exit condition. Each retired
//! prompt is then downsampled to a fixed-size, outcome-balanced group whose
//! advantages use the mean of the whole pool as baseline. The crate pairs this
//! with a synthetic categorical environment where pass rates, gradients and
//! elimination budgets all have closed forms.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`.

pub mod analysis;
pub mod config;
pub mod env;
pub mod error;
pub mod grouping;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::{Matrix, Real};

pub type Policy = env::Policy<f64>;
pub type Sample = env::Sample<f64>;
pub type ResponsePool = sampler::ResponsePool<f64>;
pub type Collection = sampler::Collection<f64>;
pub type GroupStats = grouping::GroupStats<f64>;
pub type UpdateGroup = grouping::UpdateGroup<f64>;
pub type UpdateBatch = objective::UpdateBatch<f64>;
pub type ClipConfig = objective::ClipConfig<f64>;
pub type Objective = objective::Objective<f64>;
pub type TrainOutput = trainer::TrainOutput<f64>;

pub type Policy32 = env::Policy<f32>;
pub type Sample32 = env::Sample<f32>;
pub type UpdateBatch32 = objective::UpdateBatch<f32>;
