//! Model configuration, parameters and the analysis/synthesis transforms.

mod codec;
mod config;
pub(crate) mod network;
mod weights;

pub use codec::{analysis, factorized_likelihood, forward_train, hyper_analysis, hyper_synthesis, synthesis};
pub use config::{Architecture, DistortionMetric, ModelConfig, ATTENTION_WINDOW};
pub use weights::{ModelWeights, ParamArray, WEIGHTS_VERSION};
