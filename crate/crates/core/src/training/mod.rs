//! Rate–distortion training: `D + λ·R` with R in bits per pixel.

mod data;
mod metrics;
mod optim;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use data::{image_files, sample_patches, synthetic_image, synthetic_images, PatchDataset};
pub use metrics::{gaussian_window, ms_ssim, ms_ssim_scale_weights, ms_ssim_var, mse, mse_var, MS_SSIM_WEIGHTS};
pub use optim::{clip_global_norm, global_norm, Adam};

use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::model::network::Net;
use crate::model::{DistortionMetric, ModelConfig, ModelWeights};
use crate::nn::{Real, Tape, Tensor, Var};
use crate::quantization::noise_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub lambda: f64,
    pub metric: DistortionMetric,
    pub steps: usize,
    pub batch: usize,
    pub patch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Maximum global gradient norm.
    pub clip_norm: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda: 0.003,
            metric: DistortionMetric::Mse,
            steps: 2000,
            batch: 16,
            patch: 32,
            lr: DEFAULT_LR,
            seed: 0,
            clip_norm: 1.0,
        }
    }
}

/// Default learning rate for desk-scale runs.
pub const DEFAULT_LR: f64 = 2e-3;

impl TrainingConfig {
    pub fn validate(&self, arch: &ModelConfig) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda {} must be finite and non-negative", self.lambda));
        }
        if self.steps == 0 || self.batch == 0 {
            return bad("steps and batch must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || !(self.clip_norm > 0.0) {
            return bad("learning rate and clip norm must be positive".into());
        }
        let stride = arch.pad_stride();
        if self.patch == 0 || self.patch % stride != 0 {
            return bad(format!("patch {} must be a positive multiple of {stride}", self.patch));
        }
        arch.validate()
    }
}

/// `D + λ · bits / (H·W)`, with `D` the MSE or `1 − MS-SSIM`.
pub fn rd_loss(x: &ImageF, x_tilde: &ImageF, total_bits: f64, cfg: &TrainingConfig) -> Result<f64> {
    if !(total_bits >= 0.0) {
        return Err(Error::InvalidArgument(format!("total bits {total_bits} must be non-negative")));
    }
    let d = match cfg.metric {
        DistortionMetric::Mse => mse(x, x_tilde)?,
        DistortionMetric::MsSsim => 1.0 - ms_ssim(x, x_tilde)?,
    };
    let pixels = (x.height() * x.width()) as f64;
    Ok(d + cfg.lambda * total_bits / pixels)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub distortion: f64,
    pub rate_bpp: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    pub records: Vec<LossRecord>,
}

impl LossLog {
    /// Mean loss over the `window` records ending at `step` (inclusive).
    pub fn smoothed(&self, step: usize, window: usize) -> Option<f64> {
        let end = self.records.iter().position(|r| r.step == step)? + 1;
        let slice = &self.records[end.saturating_sub(window)..end];
        Some(slice.iter().map(|r| r.loss).sum::<f64>() / slice.len() as f64)
    }

    /// CSV with columns `step,loss,D,R_bpp`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "loss", "D", "R_bpp"])?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.loss.to_string(),
                r.distortion.to_string(),
                r.rate_bpp.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub struct TrainedModel {
    pub weights: ModelWeights,
    pub log: LossLog,
}

fn batch_tensor<T: Real>(patches: &[ImageF]) -> Tensor<T> {
    let (h, w) = (patches[0].height(), patches[0].width());
    let mut data = Vec::with_capacity(patches.len() * 3 * h * w);
    for p in patches {
        data.extend(p.to_planar().iter().map(|&v| T::c(v as f64)));
    }
    Tensor::new(vec![patches.len(), 3, h, w], data)
}

struct LossParts<'t, T: Real> {
    loss: Var<'t, T>,
    distortion: Var<'t, T>,
    rate_bpp: Var<'t, T>,
}

fn loss_graph<'t, T: Real>(
    net: &Net<'t, T>,
    x: Var<'t, T>,
    cfg: &TrainingConfig,
    step: u64,
) -> Result<LossParts<'t, T>> {
    let pass = net.train_pass(x, cfg.seed, step)?;
    let distortion = match cfg.metric {
        DistortionMetric::Mse => mse_var(x, pass.x_hat),
        DistortionMetric::MsSsim => ms_ssim_var(x, pass.x_hat)?.scale(-T::one()).add_scalar(T::one()),
    };
    let shape = x.shape();
    let pixels = (shape[0] * shape[2] * shape[3]) as f64;
    let rate_bpp = pass.bits_y.add(pass.bits_z).scale(T::c(1.0 / pixels));
    let loss = distortion.add(rate_bpp.scale(T::c(cfg.lambda)));
    Ok(LossParts { loss, distortion, rate_bpp })
}

/// Seed of the patch batch drawn at `step`.
fn batch_seed(seed: u64, step: usize) -> u64 {
    noise_seed(seed, step as u64, u64::MAX)
}

/// Trains one model. `arch.lambda` and `arch.metric` are replaced by the
/// training values; every random choice derives from `arch.init_seed` and
/// `cfg.seed`.
pub fn train_model(cfg: &TrainingConfig, data: &PatchDataset, arch: &ModelConfig) -> Result<TrainedModel> {
    train_model_with(cfg, data, arch, |_| {})
}

/// [`train_model`] with a callback after every step.
pub fn train_model_with(
    cfg: &TrainingConfig,
    data: &PatchDataset,
    arch: &ModelConfig,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<TrainedModel> {
    cfg.validate(arch)?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("dataset has no images".into()));
    }
    let model_cfg = ModelConfig {
        lambda: cfg.lambda,
        metric: cfg.metric,
        ..arch.clone()
    };
    let mut params = ModelWeights::init(model_cfg.clone())?.tensors::<f32>();
    let mut adam = Adam::new(&params, cfg.lr);
    let mut log = LossLog::default();
    for step in 0..cfg.steps {
        let diverged = |reason: String, params: &BTreeMap<String, Tensor<f32>>| -> Error {
            match ModelWeights::from_tensors(model_cfg.clone(), params) {
                Ok(w) => Error::Diverged {
                    step,
                    reason,
                    checkpoint: Box::new(w),
                },
                Err(e) => e,
            }
        };
        let patches = sample_patches(data, cfg.batch, cfg.patch, batch_seed(cfg.seed, step))?;
        let tape = Tape::<f32>::new();
        let net = Net::bind(&tape, &model_cfg, &params);
        let x = tape.constant(batch_tensor(&patches));
        let parts = match loss_graph(&net, x, cfg, step as u64) {
            Ok(p) => p,
            Err(Error::NonFinite { layer }) => return Err(diverged(format!("non-finite output of {layer}"), &params)),
            Err(e) => return Err(e),
        };
        let record = LossRecord {
            step,
            loss: parts.loss.value().data[0] as f64,
            distortion: parts.distortion.value().data[0] as f64,
            rate_bpp: parts.rate_bpp.value().data[0] as f64,
        };
        if !record.loss.is_finite() {
            return Err(diverged(format!("loss is {}", record.loss), &params));
        }
        let mut grads_raw = tape.backward(parts.loss);
        let mut grads: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
        for (name, v) in net.vars() {
            if let Some(g) = grads_raw.take(*v) {
                grads.insert(name.clone(), g);
            }
        }
        let norm = clip_global_norm(&mut grads, cfg.clip_norm);
        if !norm.is_finite() {
            return Err(diverged(format!("gradient norm is {norm}"), &params));
        }
        drop(net);
        adam.step(&mut params, &grads);
        log.records.push(record);
        on_step(&record);
    }
    let weights = ModelWeights::from_tensors(model_cfg, &params)?;
    Ok(TrainedModel { weights, log })
}

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Analytic gradient of the loss for every parameter array.
    pub gradients: BTreeMap<String, Tensor<f64>>,
}

/// Largest model accepted by [`gradient_check`].
pub const GRADIENT_CHECK_MAX_PARAMS: usize = 10_000;
/// Relative errors use `max(|analytic|, |numeric|, GRADIENT_FLOOR)` as the
/// denominator, so gradients at rounding-noise level do not dominate.
pub const GRADIENT_FLOOR: f64 = 1e-7;

/// Compares the analytic gradient of the training loss on `x` with central
/// differences of step `h` on `samples` randomly chosen parameters, in f64.
pub fn gradient_check_with(
    cfg: &TrainingConfig,
    arch: &ModelConfig,
    x: &ImageF,
    h: f64,
    samples: usize,
) -> Result<GradientCheck> {
    let model_cfg = ModelConfig {
        lambda: cfg.lambda,
        metric: cfg.metric,
        ..arch.clone()
    };
    let weights = ModelWeights::init(model_cfg.clone())?;
    if weights.num_parameters() > GRADIENT_CHECK_MAX_PARAMS {
        return Err(Error::InvalidArgument(format!(
            "gradient check needs at most {GRADIENT_CHECK_MAX_PARAMS} parameters, model has {}",
            weights.num_parameters()
        )));
    }
    let stride = model_cfg.pad_stride();
    if x.height() % stride != 0 || x.width() % stride != 0 {
        return Err(crate::error::shape_err("gradient_check image", stride, (x.height(), x.width())));
    }
    let base = weights.tensors::<f64>();
    let input = batch_tensor::<f64>(std::slice::from_ref(x));

    let tape = Tape::<f64>::new();
    let net = Net::bind(&tape, &model_cfg, &base);
    let parts = loss_graph(&net, tape.constant(input.clone()), cfg, 0)?;
    let mut g = tape.backward(parts.loss);
    let gradients: BTreeMap<String, Tensor<f64>> = net
        .vars()
        .iter()
        .map(|(k, v)| (k.clone(), g.take(*v).unwrap_or_else(|| Tensor::zeros(&v.shape()))))
        .collect();

    let eval = |params: &BTreeMap<String, Tensor<f64>>| -> Result<f64> {
        let tape = Tape::<f64>::inference();
        let net = Net::bind(&tape, &model_cfg, params);
        let parts = loss_graph(&net, tape.constant(input.clone()), cfg, 0)?;
        let v = parts.loss.value().data[0];
        Ok(v)
    };

    let index: Vec<(String, usize)> = base
        .iter()
        .flat_map(|(k, t)| (0..t.len()).map(move |i| (k.clone(), i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picks = sample(&mut rng, index.len(), samples.min(index.len()));
    let mut max_rel: f64 = 0.0;
    let mut params = base.clone();
    for pick in picks.iter() {
        let (name, i) = &index[pick];
        let orig = base[name].data[*i];
        params.get_mut(name).unwrap().data[*i] = orig + h;
        let fp = eval(&params)?;
        params.get_mut(name).unwrap().data[*i] = orig - h;
        let fm = eval(&params)?;
        params.get_mut(name).unwrap().data[*i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let analytic = gradients[name].data[*i];
        let denom = analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
    }
    Ok(GradientCheck {
        max_rel_error: max_rel,
        checked: picks.len(),
        gradients,
    })
}

/// [`gradient_check_with`] at step 1e-5 over 128 parameters.
pub fn gradient_check(cfg: &TrainingConfig, arch: &ModelConfig, x: &ImageF) -> Result<f64> {
    gradient_check_with(cfg, arch, x, 1e-5, 128).map(|r| r.max_rel_error)
}
