//! Discretized Gaussian conditional: likelihoods of mean-shifted integer
//! symbols and the bank of quantized tables used to code them.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::cdf::{build_cdf_table, QuantizedCDF};
use crate::error::{shape_err, Error, Result};
use crate::latent::TensorF;
use crate::nn::{Real, Tensor, Var};

/// Lower bound enforced on every predicted scale.
pub const SIGMA_MIN: f64 = 1e-4;

/// Number of logarithmically spaced scales with a coding table.
pub const NUM_SCALES: usize = 64;
pub const SCALE_TABLE_MIN: f64 = 0.11;
pub const SCALE_TABLE_MAX: f64 = 256.0;

pub const SUPPORT_MIN: i32 = -127;
pub const SUPPORT_MAX: i32 = 128;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `Φ((k + 1/2)/σ) − Φ((k − 1/2)/σ)`, evaluated on the lower tail for
/// precision.
pub fn gaussian_pmf(k: f64, sigma: f64) -> f64 {
    let a = k.abs();
    std_normal_cdf((0.5 - a) / sigma) - std_normal_cdf((-0.5 - a) / sigma)
}

/// Mean and scale of the conditional Gaussian over `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mu: TensorF,
    pub sigma: TensorF,
}

impl GaussianParams {
    pub fn new(mu: TensorF, sigma: TensorF) -> Result<Self> {
        if mu.shape() != sigma.shape() {
            return Err(shape_err("GaussianParams", mu.shape(), sigma.shape()));
        }
        Ok(GaussianParams { mu, sigma })
    }
}

/// Per-element probability of `y_sym` (with `y_sym − μ` integral).
pub fn gaussian_likelihood(y_sym: &TensorF, p: &GaussianParams) -> Result<TensorF> {
    if y_sym.shape() != p.mu.shape() || y_sym.shape() != p.sigma.shape() {
        return Err(shape_err("gaussian_likelihood", p.mu.shape(), y_sym.shape()));
    }
    // f32 storage of a bound computed in f64 may land a hair below it.
    let floor = (SIGMA_MIN as f32) as f64 * (1.0 - 1e-6);
    if let Some(s) = p.sigma.data().iter().find(|&&s| !((s as f64) >= floor)) {
        return Err(Error::InvalidArgument(format!("sigma {s} below the lower bound {SIGMA_MIN}")));
    }
    let data = y_sym
        .data()
        .iter()
        .zip(p.mu.data())
        .zip(p.sigma.data())
        .map(|((&v, &m), &s)| gaussian_pmf(v as f64 - m as f64, s as f64) as f32)
        .collect();
    TensorF::new(y_sym.shape(), data)
}

/// Differentiable likelihood of `values` under `N(mu, sigma)` integrated
/// over unit bins.
pub fn gaussian_likelihood_var<'t, T: Real>(values: Var<'t, T>, mu: Var<'t, T>, sigma: Var<'t, T>) -> Var<'t, T> {
    let (v, m, s) = (values.value(), mu.value(), sigma.value());
    assert!(v.shape == m.shape && v.shape == s.shape, "gaussian likelihood shapes");
    let n = v.len();
    let mut lik = Vec::with_capacity(n);
    let mut d_k = Vec::with_capacity(n);
    let mut d_s = Vec::with_capacity(n);
    for i in 0..n {
        let k = v.data[i].f64() - m.data[i].f64();
        let sigma = s.data[i].f64();
        let a = k.abs();
        let u = (0.5 - a) / sigma;
        let l = (-0.5 - a) / sigma;
        lik.push(T::c(std_normal_cdf(u) - std_normal_cdf(l)));
        let (pu, pl) = (std_normal_pdf(u), std_normal_pdf(l));
        d_k.push(T::c((pl - pu) / sigma * k.signum() * (k != 0.0) as i32 as f64));
        d_s.push(T::c((pl * l - pu * u) / sigma));
    }
    let shape = v.shape.clone();
    values.tape().op(Tensor::new(shape.clone(), lik), &[values, mu, sigma], move |g| {
        let gk: Vec<T> = g.data.iter().zip(&d_k).map(|(&g, &d)| g * d).collect();
        let gm: Vec<T> = gk.iter().map(|&v| -v).collect();
        let gs: Vec<T> = g.data.iter().zip(&d_s).map(|(&g, &d)| g * d).collect();
        vec![
            Tensor::new(shape.clone(), gk),
            Tensor::new(shape.clone(), gm),
            Tensor::new(shape.clone(), gs),
        ]
    })
}

/// Coding tables for the 64 table scales.
#[derive(Clone, Debug)]
pub struct GaussianTableBank {
    scales: Vec<f64>,
    tables: Vec<QuantizedCDF>,
}

impl Default for GaussianTableBank {
    fn default() -> Self {
        Self::new()
    }
}

impl GaussianTableBank {
    pub fn new() -> Self {
        let (lo, hi) = (SCALE_TABLE_MIN.ln(), SCALE_TABLE_MAX.ln());
        let scales: Vec<f64> = (0..NUM_SCALES)
            .map(|i| (lo + (hi - lo) * i as f64 / (NUM_SCALES - 1) as f64).exp())
            .collect();
        // Every table spans the full symbol range so rare outliers cost a
        // minimum-frequency slot rather than an escape.
        let tables = scales
            .iter()
            .map(|&s| {
                let pmf: Vec<f64> = (SUPPORT_MIN..=SUPPORT_MAX).map(|k| gaussian_pmf(k as f64, s)).collect();
                build_cdf_table(&pmf, SUPPORT_MIN, true).expect("non-empty Gaussian support")
            })
            .collect();
        GaussianTableBank { scales, tables }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Table index for `sigma`, nearest in log-scale and clamped to the bank.
    pub fn index(&self, sigma: f32) -> usize {
        let (lo, hi) = (SCALE_TABLE_MIN.ln(), SCALE_TABLE_MAX.ln());
        let t = ((sigma as f64).max(SIGMA_MIN).ln() - lo) / (hi - lo) * (NUM_SCALES - 1) as f64;
        t.round().clamp(0.0, (NUM_SCALES - 1) as f64) as usize
    }

    pub fn table(&self, index: usize) -> &QuantizedCDF {
        &self.tables[index]
    }

    pub fn table_for(&self, sigma: f32) -> &QuantizedCDF {
        &self.tables[self.index(sigma)]
    }
}
