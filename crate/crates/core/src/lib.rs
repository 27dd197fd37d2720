//! Logit-correction debiasing: scorers, losses, group-prior estimation,
//! Group MixUp, metrics, discrete oracles, datasets and the dual-branch trainer.

pub mod data;
pub mod debias;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod scalar;
pub mod trainer;

pub use scalar::Scalar;

pub type Tensor32 = numerics::Tensor<f32>;
pub type Tensor64 = numerics::Tensor<f64>;
pub type Mlp32 = model::MlpScorer<f32>;
pub type Mlp64 = model::MlpScorer<f64>;
pub type GroupPrior32 = debias::GroupPrior<f32>;
pub type GroupPrior64 = debias::GroupPrior<f64>;
