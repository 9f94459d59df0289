use crate::error::{Error, Result};
use crate::image::ImageU8;
use crate::model::ModelWeights;
use crate::variable_rate::latent_symbols;

/// Default bin count: symbols −32..=32.
pub const DEFAULT_BINS: usize = 65;

/// Normalized histogram over the integer symbols `−half..=half`.
/// Symbols outside the range are counted in the edge bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    half: i32,
    mass: Vec<f64>,
}

impl Histogram {
    pub fn from_symbols(symbols: &[i32], bins: usize) -> Result<Self> {
        if bins % 2 == 0 {
            return Err(Error::InvalidArgument(format!("histogram bin count {bins} must be odd")));
        }
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("histogram of no symbols".into()));
        }
        let half = (bins / 2) as i32;
        let mut counts = vec![0u64; bins];
        for &s in symbols {
            counts[(s.clamp(-half, half) + half) as usize] += 1;
        }
        let n = symbols.len() as f64;
        Ok(Histogram {
            half,
            mass: counts.iter().map(|&c| c as f64 / n).collect(),
        })
    }

    /// Builds from explicit masses for `−half..=half`, renormalized.
    pub fn from_mass(mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if mass.len() % 2 == 0 || mass.iter().any(|&m| !(m >= 0.0)) || !(total > 0.0) {
            return Err(Error::InvalidArgument("histogram mass must be odd-length, non-negative and non-zero".into()));
        }
        Ok(Histogram {
            half: (mass.len() / 2) as i32,
            mass: mass.iter().map(|m| m / total).collect(),
        })
    }

    pub fn half_width(&self) -> i32 {
        self.half
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `(symbol, mass)` pairs from `−half` up.
    pub fn bins(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.mass.iter().enumerate().map(move |(i, &m)| (i as i32 - self.half, m))
    }

    pub fn center_mass(&self) -> f64 {
        self.mass[self.half as usize]
    }
}

/// Histogram of the transmitted latent integers `ŷ − μ` (`ŷ` without a
/// hyperprior) for `s · x`.
pub fn latent_histogram(x: &ImageU8, w: &ModelWeights, s: f32, bins: usize) -> Result<Histogram> {
    let lat = latent_symbols(x, w, s)?;
    Histogram::from_symbols(&lat.y, bins)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dispersion {
    pub variance: f64,
    pub zero_mass: f64,
    /// Laplacian scale fit by maximum likelihood: mean absolute deviation
    /// from the median.
    pub laplacian_b: f64,
}

pub fn dispersion_stats(h: &Histogram) -> Dispersion {
    let mean: f64 = h.bins().map(|(k, m)| k as f64 * m).sum();
    let variance = h.bins().map(|(k, m)| m * (k as f64 - mean).powi(2)).sum();
    let mut acc = 0.0;
    let median = h
        .bins()
        .find(|&(_, m)| {
            acc += m;
            acc >= 0.5 - 1e-12
        })
        .map_or(0, |(k, _)| k) as f64;
    let laplacian_b = h.bins().map(|(k, m)| m * (k as f64 - median).abs()).sum();
    Dispersion {
        variance,
        zero_mass: h.center_mass(),
        laplacian_b,
    }
}
