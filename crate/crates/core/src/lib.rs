//! Learned lossy image codec whose bitrate is controlled at inference time
//! by scaling the input image by `s ∈ (0, 1]`.

pub mod entropy;
pub mod error;
pub mod image;
pub mod latent;
pub mod model;
pub mod nn;
pub mod quantization;
pub mod tooling;
pub mod training;
pub mod variable_rate;

pub use error::{Error, Result};
pub use image::{Dims, ImageF, ImageU8};
pub use latent::TensorF;
pub use model::{Architecture, DistortionMetric, ModelConfig, ModelWeights};
pub use tooling::{Histogram, RDCurve, RDPoint};
pub use training::{PatchDataset, TrainingConfig};
pub use variable_rate::CompressedFile;
