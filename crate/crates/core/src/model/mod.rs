//! The matching network: word representation, filter, context encoding,
//! multi-perspective matching, aggregation and boundary prediction.

pub mod config;
pub mod dropout;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod params;

pub use config::{ModelConfig, Strategy, FLAG_NAMES};
pub use dropout::DropoutKey;
pub use gradcheck::{check_model_gradients, gradient_suite, ModelGradReport};
pub use layers::{multi_perspective_match, Bound};
pub use network::{span_loss_var, BoundaryDistributions, Mode, Model, Trace, LOG_FLOOR};
pub use params::{ModelParams, ParamSet};

#[cfg(all(test, not(feature = "single-precision")))]
mod tests;
