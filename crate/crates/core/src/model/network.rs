//! The four transforms as tape computations, generic over precision.

use std::collections::BTreeMap;

use super::config::{Architecture, ModelConfig, ATTENTION_WINDOW};
use crate::entropy::factorized::{factorized_likelihood_var, PriorVars};
use crate::entropy::gaussian::{gaussian_likelihood_var, SIGMA_MIN};
use crate::error::{Error, Result};
use crate::nn::attention::window_attention;
use crate::nn::{Real, Tape, Tensor, Var};
use crate::quantization::{noise_seed, uniform_noise};

const GDN_BETA_MIN: f64 = 1e-6;
/// Lower clamp on likelihoods entering the rate estimate.
pub(crate) const LIKELIHOOD_FLOOR: f64 = 1e-9;

/// Noise-stream ids for the two quantized tensors.
const NOISE_Y: u64 = 0;
const NOISE_Z: u64 = 1;

pub(crate) struct Net<'t, T: Real> {
    cfg: ModelConfig,
    vars: BTreeMap<String, Var<'t, T>>,
}

/// Values produced by one relaxed training pass.
pub(crate) struct TrainPass<'t, T: Real> {
    /// Unclamped reconstruction.
    pub x_hat: Var<'t, T>,
    pub bits_y: Var<'t, T>,
    pub bits_z: Var<'t, T>,
}

impl<'t, T: Real> Net<'t, T> {
    /// Puts every parameter on `tape` as a trainable leaf.
    pub fn bind(tape: &'t Tape<T>, cfg: &ModelConfig, tensors: &BTreeMap<String, Tensor<T>>) -> Self {
        let vars = tensors.iter().map(|(k, t)| (k.clone(), tape.param(t.clone()))).collect();
        Net { cfg: cfg.clone(), vars }
    }

    pub fn vars(&self) -> &BTreeMap<String, Var<'t, T>> {
        &self.vars
    }

    fn p(&self, name: &str) -> Var<'t, T> {
        self.vars[name]
    }

    fn check(&self, v: Var<'t, T>, layer: impl Into<String>) -> Result<Var<'t, T>> {
        if v.value().all_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { layer: layer.into() })
        }
    }

    fn gdn(&self, x: Var<'t, T>, prefix: &str, inverse: bool) -> Var<'t, T> {
        let c = x.shape()[1];
        let beta = self.p(&format!("{prefix}.beta")).square().add_scalar(T::c(GDN_BETA_MIN));
        let gamma = self.p(&format!("{prefix}.gamma")).square().reshape(&[c, c, 1, 1]);
        let norm = x.square().conv2d(gamma, Some(beta), 1, 0).sqrt();
        if inverse {
            x.mul(norm)
        } else {
            x.div(norm)
        }
    }

    fn attention(&self, x: Var<'t, T>, side: &str) -> Var<'t, T> {
        let m = |n: &str| self.p(&format!("{side}.attn.{n}"));
        window_attention(x, m("wq"), m("wk"), m("wv"), m("wo"), ATTENTION_WINDOW)
    }

    fn attention_enabled(&self) -> bool {
        self.cfg.architecture == Architecture::AttentionLite
    }

    pub fn g_a(&self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let stages = self.cfg.main_stages();
        let pad = self.cfg.kernel_size / 2;
        let mut h = x;
        for i in 0..stages {
            let name = format!("g_a.conv{i}");
            h = h.conv2d(self.p(&format!("{name}.weight")), None, 2, pad);
            h = self.check(h, name)?;
            if i + 1 < stages {
                let name = format!("g_a.gdn{i}");
                h = self.check(self.gdn(h, &name, false), name)?;
            }
        }
        if self.attention_enabled() {
            h = self.check(self.attention(h, "g_a"), "g_a.attn")?;
        }
        Ok(h)
    }

    /// Reconstruction before clamping.
    pub fn g_s(&self, y: Var<'t, T>) -> Result<Var<'t, T>> {
        let stages = self.cfg.main_stages();
        let pad = self.cfg.kernel_size / 2;
        let mut h = y;
        if self.attention_enabled() {
            h = self.check(self.attention(h, "g_s"), "g_s.attn")?;
        }
        for i in 0..stages {
            let name = format!("g_s.deconv{i}");
            let (w, b) = (self.p(&format!("{name}.weight")), self.p(&format!("{name}.bias")));
            h = self.check(h.conv_transpose2d(w, Some(b), 2, pad, 1), name)?;
            if i + 1 < stages {
                let name = format!("g_s.igdn{i}");
                h = self.check(self.gdn(h, &name, true), name)?;
            }
        }
        Ok(h)
    }

    pub fn h_a(&self, y: Var<'t, T>) -> Result<Var<'t, T>> {
        self.require_hyper()?;
        let [s0, s1] = self.cfg.hyper_strides();
        let h = y.conv2d(self.p("h_a.conv0.weight"), Some(self.p("h_a.conv0.bias")), s0, 0);
        let h = self.check(h, "h_a.conv0")?.relu();
        let z = h.conv2d(self.p("h_a.conv1.weight"), Some(self.p("h_a.conv1.bias")), s1, 0);
        self.check(z, "h_a.conv1")
    }

    /// `(mu, sigma)` with `sigma = SIGMA_MIN + softplus(raw)`.
    pub fn h_s(&self, z: Var<'t, T>) -> Result<(Var<'t, T>, Var<'t, T>)> {
        self.require_hyper()?;
        let [s0, s1] = self.cfg.hyper_strides();
        let h = z.conv_transpose2d(self.p("h_s.deconv0.weight"), Some(self.p("h_s.deconv0.bias")), s1, 0, 0);
        let h = self.check(h, "h_s.deconv0")?.relu();
        let h = h.conv_transpose2d(self.p("h_s.deconv1.weight"), Some(self.p("h_s.deconv1.bias")), s0, 0, 0);
        let h = self.check(h, "h_s.deconv1")?;
        let cy = self.cfg.latent_channels;
        let mu = h.slice_channels(0, cy);
        let sigma = h.slice_channels(cy, 2 * cy).softplus().add_scalar(T::c(SIGMA_MIN));
        Ok((mu, self.check(sigma, "h_s.sigma")?))
    }

    fn require_hyper(&self) -> Result<()> {
        if self.cfg.architecture.has_hyperprior() {
            Ok(())
        } else {
            Err(Error::UnsupportedArchitecture(self.cfg.architecture.name()))
        }
    }

    pub fn prior(&self) -> PriorVars<'t, T> {
        PriorVars {
            matrices: std::array::from_fn(|i| self.p(&format!("prior.matrix{i}"))),
            biases: std::array::from_fn(|i| self.p(&format!("prior.bias{i}"))),
            factors: std::array::from_fn(|i| self.p(&format!("prior.factor{i}"))),
        }
    }

    /// Relaxed pass: additive uniform noise in place of rounding, with
    /// likelihood-based bit counts for both latents.
    pub fn train_pass(&self, x: Var<'t, T>, seed: u64, step: u64) -> Result<TrainPass<'t, T>> {
        let tape = x.tape();
        let y = self.g_a(x)?;
        let y_tilde = add_noise(y, noise_seed(seed, step, NOISE_Y));
        let x_hat = self.g_s(y_tilde)?;
        let (lik_y, bits_z) = if self.cfg.architecture.has_hyperprior() {
            let z = self.h_a(y)?;
            let z_tilde = add_noise(z, noise_seed(seed, step, NOISE_Z));
            let lik_z = self.check(factorized_likelihood_var(z_tilde, &self.prior()), "prior.likelihood_z")?;
            let (mu, sigma) = self.h_s(z_tilde)?;
            let lik_y = gaussian_likelihood_var(y_tilde, mu, sigma);
            (lik_y, bits(lik_z))
        } else {
            let lik_y = factorized_likelihood_var(y_tilde, &self.prior());
            (lik_y, tape.constant(Tensor::scalar(T::zero())))
        };
        let lik_y = self.check(lik_y, "likelihood_y")?;
        Ok(TrainPass {
            x_hat,
            bits_y: bits(lik_y),
            bits_z,
        })
    }
}

fn add_noise<'t, T: Real>(v: Var<'t, T>, seed: u64) -> Var<'t, T> {
    let shape = v.shape();
    let noise = uniform_noise(shape.iter().product(), seed);
    v.add_const(&Tensor::new(shape, noise.iter().map(|&u| T::c(u as f64)).collect()))
}

/// `Σ −log2 max(p, floor)`, with the floor passing gradients that would
/// raise `p`.
pub(crate) fn bits<'t, T: Real>(lik: Var<'t, T>) -> Var<'t, T> {
    lik.lower_bound(T::c(LIKELIHOOD_FLOOR))
        .ln()
        .sum()
        .scale(T::c(-std::f64::consts::LOG2_E))
}
