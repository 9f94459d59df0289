//! Likelihood models, rate estimation and the range coder that turns
//! quantized latents into bytes.

pub mod cdf;
pub mod factorized;
pub mod gaussian;
pub mod range;

pub use cdf::{build_cdf_table, QuantizedCDF, TOTAL_FREQ};
pub use factorized::PriorNet;
pub use gaussian::{gaussian_likelihood, GaussianParams, GaussianTableBank, SIGMA_MIN};
pub use crate::model::factorized_likelihood;
pub use range::{range_decode, range_encode, table_entropy_bits};

use crate::error::{Error, Result};
use crate::latent::TensorF;

/// Total information content `Σ −log2 p` in bits.
pub fn estimate_bits(likelihoods: &TensorF) -> Result<f64> {
    likelihoods.data().iter().try_fold(0.0, |acc, &p| {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!("likelihood {p} outside (0, 1]")));
        }
        Ok(acc - (p as f64).log2())
    })
}
