use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Latents coded directly under the learned factorized prior.
    Factorized,
    /// Scale-and-mean hyperprior.
    Hyperprior,
    /// Hyperprior with a windowed self-attention block at the latent end of
    /// both main transforms.
    AttentionLite,
}

impl Architecture {
    pub fn id(self) -> u8 {
        match self {
            Architecture::Factorized => 0,
            Architecture::Hyperprior => 1,
            Architecture::AttentionLite => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Architecture::Factorized),
            1 => Some(Architecture::Hyperprior),
            2 => Some(Architecture::AttentionLite),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Factorized => "factorized",
            Architecture::Hyperprior => "hyperprior",
            Architecture::AttentionLite => "attention_lite",
        }
    }

    pub fn has_hyperprior(self) -> bool {
        self != Architecture::Factorized
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factorized" => Ok(Architecture::Factorized),
            "hyperprior" => Ok(Architecture::Hyperprior),
            "attention_lite" => Ok(Architecture::AttentionLite),
            _ => Err(Error::InvalidArgument(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistortionMetric {
    Mse,
    MsSsim,
}

impl DistortionMetric {
    pub fn flag(self) -> u8 {
        match self {
            DistortionMetric::Mse => 0,
            DistortionMetric::MsSsim => 1,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(DistortionMetric::Mse),
            1 => Some(DistortionMetric::MsSsim),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistortionMetric::Mse => "mse",
            DistortionMetric::MsSsim => "ms_ssim",
        }
    }
}

impl fmt::Display for DistortionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistortionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(DistortionMetric::Mse),
            "ms_ssim" | "ms-ssim" => Ok(DistortionMetric::MsSsim),
            _ => Err(Error::InvalidArgument(format!("unknown metric {s:?}"))),
        }
    }
}

/// Model shape and training target.
///
/// `stride_y` must be a power of two (one stride-2 stage per factor of
/// two in the main transforms). `stride_z / stride_y` must be 1, 2 or 4,
/// spread over the two hyper stages.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub latent_channels: usize,
    pub hyper_channels: usize,
    pub hidden_channels: usize,
    pub kernel_size: usize,
    pub stride_y: usize,
    pub stride_z: usize,
    pub metric: DistortionMetric,
    pub lambda: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Hyperprior,
            latent_channels: 64,
            hyper_channels: 32,
            hidden_channels: 32,
            kernel_size: 3,
            stride_y: 16,
            stride_z: 64,
            metric: DistortionMetric::Mse,
            lambda: 0.003,
            init_seed: 0,
        }
    }
}

/// Attention window side, in latent positions.
pub const ATTENTION_WINDOW: usize = 4;

impl ModelConfig {
    /// Desk-scale configuration for 32×32 training patches.
    pub fn toy(architecture: Architecture) -> Self {
        ModelConfig {
            architecture,
            stride_z: 32,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.latent_channels == 0 || self.hyper_channels == 0 || self.hidden_channels == 0 {
            return bad("channel counts must be at least 1".into());
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        if self.stride_y < 2 || !self.stride_y.is_power_of_two() {
            return bad(format!("stride_y {} must be a power of two ≥ 2", self.stride_y));
        }
        if self.stride_z % self.stride_y != 0 || ![1, 2, 4].contains(&(self.stride_z / self.stride_y)) {
            return bad(format!(
                "stride_z {} must be 1, 2 or 4 times stride_y {}",
                self.stride_z, self.stride_y
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda {} must be finite and non-negative", self.lambda));
        }
        Ok(())
    }

    /// Number of stride-2 stages in each main transform.
    pub fn main_stages(&self) -> usize {
        self.stride_y.trailing_zeros() as usize
    }

    /// Strides of the two hyper-analysis stages.
    pub fn hyper_strides(&self) -> [usize; 2] {
        match self.stride_z / self.stride_y {
            4 => [2, 2],
            2 => [2, 1],
            _ => [1, 1],
        }
    }

    /// Stride images are padded to before coding.
    pub fn pad_stride(&self) -> usize {
        if self.architecture.has_hyperprior() {
            self.stride_z
        } else {
            self.stride_y
        }
    }

    /// Channels modelled by the factorized prior.
    pub fn prior_channels(&self) -> usize {
        if self.architecture.has_hyperprior() {
            self.hyper_channels
        } else {
            self.latent_channels
        }
    }

    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        format!(
            "architecture={}\nlatent_channels={}\nhyper_channels={}\nhidden_channels={}\nkernel_size={}\n\
             stride_y={}\nstride_z={}\nmetric={}\nlambda={}\ninit_seed={}\n",
            self.architecture,
            self.latent_channels,
            self.hyper_channels,
            self.hidden_channels,
            self.kernel_size,
            self.stride_y,
            self.stride_z,
            self.metric,
            self.lambda,
            self.init_seed
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        let mut seen = 0u32;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::MalformedWeights(format!("config line {line:?}")))?;
            let num = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| Error::MalformedWeights(format!("{key}={v}")))
            };
            let bit = match key {
                "architecture" => {
                    cfg.architecture = value.parse()?;
                    0
                }
                "latent_channels" => {
                    cfg.latent_channels = num(value)?;
                    1
                }
                "hyper_channels" => {
                    cfg.hyper_channels = num(value)?;
                    2
                }
                "hidden_channels" => {
                    cfg.hidden_channels = num(value)?;
                    3
                }
                "kernel_size" => {
                    cfg.kernel_size = num(value)?;
                    4
                }
                "stride_y" => {
                    cfg.stride_y = num(value)?;
                    5
                }
                "stride_z" => {
                    cfg.stride_z = num(value)?;
                    6
                }
                "metric" => {
                    cfg.metric = value.parse()?;
                    7
                }
                "lambda" => {
                    cfg.lambda = value.parse().map_err(|_| Error::MalformedWeights(format!("lambda={value}")))?;
                    8
                }
                "init_seed" => {
                    cfg.init_seed = value.parse().map_err(|_| Error::MalformedWeights(format!("init_seed={value}")))?;
                    9
                }
                _ => return Err(Error::MalformedWeights(format!("unknown config key {key:?}"))),
            };
            seen |= 1 << bit;
        }
        if seen != (1 << 10) - 1 {
            return Err(Error::MalformedWeights("config record is missing fields".into()));
        }
        cfg.validate().map_err(|e| Error::MalformedWeights(e.to_string()))?;
        Ok(cfg)
    }
}
