use std::time::Instant;

use uvrc_core::model::{Architecture, DistortionMetric, ModelConfig};
use uvrc_core::training::{synthetic_images, train_model};
use uvrc_core::{ImageU8, ModelWeights, PatchDataset, TrainingConfig};

pub const PATCH: usize = 32;
/// 128 images of 64×64 cut into 512 disjoint 32×32 patches.
const TRAIN_IMAGES: usize = 128;
const TRAIN_SEED: u64 = 100;
const HELD_OUT_SEED: u64 = 10_000;

pub struct Models {
    /// hyperprior/MSE, λ = 0.003.
    pub hyperprior: ModelWeights,
    /// hyperprior/MSE, λ = 0.0001.
    pub hyperprior_high_rate: ModelWeights,
    /// factorized/MSE, λ = 0.003.
    pub factorized: ModelWeights,
    /// attention_lite/MS-SSIM, λ = 0.003.
    pub attention_ms_ssim: ModelWeights,
}

pub fn training_patches() -> PatchDataset {
    let mut patches = Vec::new();
    for img in synthetic_images(TRAIN_IMAGES, 64, 64, TRAIN_SEED) {
        let f = img.to_float();
        for (y, x) in [(0, 0), (0, PATCH), (PATCH, 0), (PATCH, PATCH)] {
            patches.push(f.crop(y, x, PATCH, PATCH).expect("tile"));
        }
    }
    PatchDataset::from_images(patches).expect("dataset")
}

/// Eight held-out 64×64 images.
pub fn held_out() -> Vec<ImageU8> {
    synthetic_images(8, 64, 64, HELD_OUT_SEED)
}

fn train(data: &PatchDataset, arch: Architecture, metric: DistortionMetric, lambda: f64) -> ModelWeights {
    let cfg = TrainingConfig { lambda, metric, patch: PATCH, ..TrainingConfig::default() };
    let t = Instant::now();
    let r = train_model(&cfg, data, &ModelConfig::toy(arch)).unwrap_or_else(|e| panic!("{arch}/{metric}: {e}"));
    let last = r.log.smoothed(cfg.steps - 1, 100).unwrap_or(f64::NAN);
    println!(
        "trained {arch}/{metric} λ={lambda} on {} patches, {} steps, {:.1} s, final loss {last:.5}",
        data.len(),
        cfg.steps,
        t.elapsed().as_secs_f64()
    );
    r.weights
}

impl Models {
    pub fn train() -> Self {
        let data = training_patches();
        Models {
            hyperprior: train(&data, Architecture::Hyperprior, DistortionMetric::Mse, 0.003),
            hyperprior_high_rate: train(&data, Architecture::Hyperprior, DistortionMetric::Mse, 0.0001),
            factorized: train(&data, Architecture::Factorized, DistortionMetric::Mse, 0.003),
            attention_ms_ssim: train(&data, Architecture::AttentionLite, DistortionMetric::MsSsim, 0.003),
        }
    }
}
