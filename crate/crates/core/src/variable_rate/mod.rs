//! Compression pipeline and inference-time input scaling.
//!
//! `scale_compress` codes `s · x` (in the `[0, 1]` domain) and records `s`
//! in the header; `scale_decompress` divides the reconstruction by `s`
//! before rounding to 8 bits. `s = 1` is the plain codec.

mod container;

use std::sync::OnceLock;

pub use container::{CompressedFile, CONTAINER_VERSION, HEADER_LEN, MAGIC};

use crate::entropy::{range_decode, range_encode, GaussianParams, GaussianTableBank, QuantizedCDF};
use crate::error::{Error, Result};
use crate::image::{pad_to_stride, unpad, Dims, ImageU8};
use crate::latent::TensorF;
use crate::model::network::LIKELIHOOD_FLOOR;
use crate::model::{analysis, hyper_analysis, hyper_synthesis, synthesis, DistortionMetric, ModelWeights};
use crate::quantization::{mean_shift_symbols, quantize_round};
use crate::tooling::{rd_point, RDPoint};
use crate::training::{ms_ssim, mse};

/// `{0.1, 0.2, ..., 0.9}`.
pub fn default_grid() -> Vec<f32> {
    (1..=9).map(|i| i as f32 / 10.0).collect()
}

pub fn validate_scale(s: f32) -> Result<()> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("scale factor {s} outside (0, 1]")))
    }
}

fn gaussian_bank() -> &'static GaussianTableBank {
    static BANK: OnceLock<GaussianTableBank> = OnceLock::new();
    BANK.get_or_init(GaussianTableBank::new)
}

/// Quantized latents of one image, as transmitted.
#[derive(Clone, Debug)]
pub struct LatentSymbols {
    /// Image size before padding.
    pub original: Dims,
    /// `round(z)`; `None` for the factorized architecture.
    pub z: Option<TensorF>,
    /// Transmitted integers for `y`: `round(y − μ)`, or `round(y)` without
    /// a hyperprior.
    pub y: Vec<i32>,
    pub y_shape: [usize; 3],
    /// Conditional Gaussian decoded from `z`, when there is one.
    pub gaussian: Option<GaussianParams>,
}

/// Runs the encoder side on `s · x` and quantizes.
pub fn latent_symbols(x: &ImageU8, w: &ModelWeights, s: f32) -> Result<LatentSymbols> {
    validate_scale(s)?;
    if x.height() > u16::MAX as usize || x.width() > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} exceeds the 65535-pixel side limit",
            x.height(),
            x.width()
        )));
    }
    let cfg = w.config();
    let (padded, original) = pad_to_stride(&x.to_float().scaled(s), cfg.pad_stride())?;
    let y = analysis(&padded, w)?;
    if !cfg.architecture.has_hyperprior() {
        let y_sym = quantize_round(&y);
        return Ok(LatentSymbols {
            original,
            z: None,
            y: y_sym.data().iter().map(|&v| v as i32).collect(),
            y_shape: y.shape(),
            gaussian: None,
        });
    }
    let z_hat = quantize_round(&hyper_analysis(&y, w)?);
    let (mu, sigma) = hyper_synthesis(&z_hat, w)?;
    Ok(LatentSymbols {
        original,
        z: Some(z_hat),
        y: mean_shift_symbols(&y, &mu)?,
        y_shape: y.shape(),
        gaussian: Some(GaussianParams::new(mu, sigma)?),
    })
}

fn channel_tables<'a>(tables: &'a [QuantizedCDF], shape: [usize; 3]) -> Vec<&'a QuantizedCDF> {
    let plane = shape[1] * shape[2];
    (0..shape.iter().product::<usize>()).map(|i| &tables[i / plane]).collect()
}

fn sigma_tables(sigma: &TensorF) -> Vec<&'static QuantizedCDF> {
    let bank = gaussian_bank();
    sigma.data().iter().map(|&s| bank.table_for(s)).collect()
}

/// `scale_compress(x, 1.0, w)`.
pub fn compress(x: &ImageU8, w: &ModelWeights) -> Result<CompressedFile> {
    scale_compress(x, 1.0, w)
}

/// Codes `x_s = s · x`, with `s` in `(0, 1]` signalled in the header.
pub fn scale_compress(x: &ImageU8, s: f32, w: &ModelWeights) -> Result<CompressedFile> {
    let lat = latent_symbols(x, w, s)?;
    let prior_tables = w.prior_net().tables();
    let (payload_z, payload_y) = match (&lat.z, &lat.gaussian) {
        (Some(z), Some(g)) => {
            let z_sym: Vec<i32> = z.data().iter().map(|&v| v as i32).collect();
            let pz = range_encode(&z_sym, &channel_tables(&prior_tables, z.shape()))?;
            let py = range_encode(&lat.y, &sigma_tables(&g.sigma))?;
            (pz, py)
        }
        _ => (Vec::new(), range_encode(&lat.y, &channel_tables(&prior_tables, lat.y_shape))?),
    };
    let cfg = w.config();
    Ok(CompressedFile {
        architecture: cfg.architecture,
        metric: cfg.metric,
        fingerprint: w.fingerprint(),
        scale: s,
        height: lat.original.height as u16,
        width: lat.original.width as u16,
        payload_z,
        payload_y,
    })
}

/// Decodes a stream produced with `scale_compress(·, 1.0, ·)`; streams
/// with another scale are rescaled exactly as in [`scale_decompress`].
pub fn decompress(f: &CompressedFile, w: &ModelWeights) -> Result<ImageU8> {
    scale_decompress(f, w)
}

/// `clamp(round(255 · x̂_s / s))` with `s` taken from the header.
pub fn scale_decompress(f: &CompressedFile, w: &ModelWeights) -> Result<ImageU8> {
    if f.fingerprint != w.fingerprint() {
        return Err(Error::ModelMismatch {
            stream: f.fingerprint,
            model: w.fingerprint(),
        });
    }
    validate_scale(f.scale).map_err(|e| Error::CorruptStream(e.to_string()))?;
    let cfg = w.config();
    let original = Dims {
        height: f.height as usize,
        width: f.width as usize,
    };
    let ps = cfg.pad_stride();
    let (hp, wp) = (original.height.div_ceil(ps) * ps, original.width.div_ceil(ps) * ps);
    let y_shape = [cfg.latent_channels, hp / cfg.stride_y, wp / cfg.stride_y];
    let y_len: usize = y_shape.iter().product();
    let prior_tables = w.prior_net().tables();

    let y_hat = if cfg.architecture.has_hyperprior() {
        let z_shape = [cfg.hyper_channels, hp / cfg.stride_z, wp / cfg.stride_z];
        let z_len = z_shape.iter().product();
        let z_sym = range_decode(&f.payload_z, &channel_tables(&prior_tables, z_shape), z_len)?;
        let z_hat = TensorF::new(z_shape, z_sym.iter().map(|&v| v as f32).collect())?;
        let (mu, sigma) = hyper_synthesis(&z_hat, w)?;
        let k = range_decode(&f.payload_y, &sigma_tables(&sigma), y_len)?;
        let data = k.iter().zip(mu.data()).map(|(&k, &m)| k as f32 + m).collect();
        TensorF::new(y_shape, data)?
    } else {
        if !f.payload_z.is_empty() {
            return Err(Error::CorruptStream("hyper-latent payload in a factorized stream".into()));
        }
        let k = range_decode(&f.payload_y, &channel_tables(&prior_tables, y_shape), y_len)?;
        TensorF::new(y_shape, k.iter().map(|&v| v as f32).collect())?
    };
    let x_hat = unpad(&synthesis(&y_hat, w)?, original)?;
    Ok(x_hat.to_u8_rescaled(f.scale))
}

/// Likelihood-based size of the stream `scale_compress(x, s, w)` would
/// produce, in bits: `Σ −log2 p` over the rounded symbols under the
/// model's own (unquantized) probabilities floored at the training
/// likelihood floor, plus the fixed framing (container header and one
/// checksum tail per payload).
pub fn estimate_file_bits(x: &ImageU8, w: &ModelWeights, s: f32) -> Result<f64> {
    let lat = latent_symbols(x, w, s)?;
    let prior = w.prior_net();
    let factorized_bits = |sym: &mut dyn Iterator<Item = i32>, shape: [usize; 3]| -> f64 {
        let plane = shape[1] * shape[2];
        sym.enumerate()
            .map(|(i, v)| -prior.likelihood(i / plane, v as f64).max(LIKELIHOOD_FLOOR).log2())
            .sum()
    };
    const TAIL_BITS: f64 = 32.0;
    let framing = 8.0 * HEADER_LEN as f64;
    match (&lat.z, &lat.gaussian) {
        (Some(z), Some(g)) => {
            let bz = factorized_bits(&mut z.data().iter().map(|&v| v as i32), z.shape());
            let by: f64 = lat
                .y
                .iter()
                .zip(g.sigma.data())
                .map(|(&k, &sg)| -crate::entropy::gaussian::gaussian_pmf(k as f64, sg as f64).max(LIKELIHOOD_FLOOR).log2())
                .sum();
            Ok(framing + 2.0 * TAIL_BITS + bz + by)
        }
        _ => Ok(framing + 2.0 * TAIL_BITS + factorized_bits(&mut lat.y.iter().copied(), lat.y_shape)),
    }
}

/// Distortion in the model's own metric on 8-bit outputs: MSE in the
/// `[0, 1]` domain, or `1 − MS-SSIM`.
pub fn metric_distortion(x: &ImageU8, x_hat: &ImageU8, metric: DistortionMetric) -> Result<f64> {
    let (a, b) = (x.to_float(), x_hat.to_float());
    match metric {
        DistortionMetric::Mse => mse(&a, &b),
        DistortionMetric::MsSsim => Ok(1.0 - ms_ssim(&a, &b)?),
    }
}

/// `(D(x, x̂′(s)), D(x, x̂(1)))` in the model's metric, for `s < 1`.
pub fn distortion_gap(x: &ImageU8, w: &ModelWeights, s: f32) -> Result<(f64, f64)> {
    validate_scale(s)?;
    if s >= 1.0 {
        return Err(Error::InvalidArgument("distortion_gap needs s < 1".into()));
    }
    let metric = w.config().metric;
    let scaled = scale_decompress(&scale_compress(x, s, w)?, w)?;
    let baseline = decompress(&compress(x, w)?, w)?;
    Ok((metric_distortion(x, &scaled, metric)?, metric_distortion(x, &baseline, metric)?))
}

/// An image/scale pair that failed during a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepFailure {
    pub image: usize,
    pub scale: f32,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct SweepReport {
    /// One averaged point per scale with at least one successful image,
    /// sorted by `s`.
    pub points: Vec<RDPoint>,
    pub failures: Vec<SweepFailure>,
}

/// Averages [`rd_point`] over `images` for every `s` in `grid`.
pub fn sweep_scales(images: &[ImageU8], w: &ModelWeights, grid: &[f32]) -> Result<SweepReport> {
    if images.is_empty() || grid.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one image and one scale".into()));
    }
    for &s in grid {
        validate_scale(s)?;
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f32::total_cmp);
    grid.dedup();
    let mut report = SweepReport::default();
    for &s in &grid {
        let mut ok = Vec::new();
        for (i, x) in images.iter().enumerate() {
            match rd_point(x, w, s) {
                Ok(p) => ok.push(p),
                Err(e) => report.failures.push(SweepFailure {
                    image: i,
                    scale: s,
                    error: e.to_string(),
                }),
            }
        }
        if let Some(first) = ok.first() {
            let n = ok.len() as f64;
            let mean = |f: fn(&RDPoint) -> f64| ok.iter().map(f).sum::<f64>() / n;
            report.points.push(RDPoint {
                bpp: mean(|p| p.bpp),
                psnr_db: mean(|p| p.psnr_db),
                ms_ssim: mean(|p| p.ms_ssim),
                distortion: mean(|p| p.distortion),
                s,
                fingerprint: first.fingerprint,
                lambda: first.lambda,
            });
        }
    }
    Ok(report)
}

/// Index of the anchor model for sweeps: the one with the highest
/// average baseline bpp on `images`.
pub fn select_anchor(models: &[ModelWeights], images: &[ImageU8]) -> Result<usize> {
    if models.is_empty() || images.is_empty() {
        return Err(Error::InvalidArgument("anchor selection needs models and images".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, w) in models.iter().enumerate() {
        let mut bits = 0.0;
        for x in images {
            bits += rd_point(x, w, 1.0)?.bpp;
        }
        if bits > best.1 {
            best = (i, bits);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ModelConfig};
    use crate::training::synthetic_image;

    fn tiny(arch: Architecture) -> ModelWeights {
        ModelWeights::init(ModelConfig {
            architecture: arch,
            latent_channels: 8,
            hyper_channels: 4,
            hidden_channels: 6,
            kernel_size: 3,
            stride_y: 4,
            stride_z: 16,
            init_seed: 3,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    const ARCHS: [Architecture; 3] = [Architecture::Factorized, Architecture::Hyperprior, Architecture::AttentionLite];

    #[test]
    fn round_trip_keeps_dims_and_is_deterministic() {
        for arch in ARCHS {
            let w = tiny(arch);
            let x = synthetic_image(23, 37, 1);
            let f = compress(&x, &w).unwrap();
            assert_eq!(f.to_bytes(), compress(&x, &w).unwrap().to_bytes());
            assert_eq!(f.payload_z.is_empty(), arch == Architecture::Factorized);
            let y = decompress(&f, &w).unwrap();
            assert_eq!((y.height(), y.width()), (23, 37));
            let g = CompressedFile::from_bytes(&f.to_bytes()).unwrap();
            assert_eq!(decompress(&g, &w).unwrap(), y);
        }
    }

    #[test]
    fn unit_scale_matches_plain_codec() {
        let w = tiny(Architecture::Hyperprior);
        let x = synthetic_image(16, 16, 2);
        let a = compress(&x, &w).unwrap();
        let b = scale_compress(&x, 1.0, &w).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(scale_decompress(&b, &w).unwrap(), decompress(&a, &w).unwrap());
    }

    #[test]
    fn header_scale_is_honoured() {
        let w = tiny(Architecture::Hyperprior);
        let x = synthetic_image(16, 16, 3);
        let f = scale_compress(&x, 0.5, &w).unwrap();
        assert_eq!(f.scale, 0.5);
        // Same payload decoded under s = 1 and s = 0.5 differs by the 1/s
        // rescale before quantization.
        let mut unit = f.clone();
        unit.scale = 1.0;
        let lat = latent_symbols(&x, &w, 0.5).unwrap();
        let g = lat.gaussian.unwrap();
        let y_hat: Vec<f32> = lat.y.iter().zip(g.mu.data()).map(|(&k, &m)| k as f32 + m).collect();
        let x_hat = synthesis(&TensorF::new(lat.y_shape, y_hat).unwrap(), &w).unwrap();
        let expected = unpad(&x_hat, lat.original).unwrap().to_u8_rescaled(0.5);
        assert_eq!(scale_decompress(&f, &w).unwrap(), expected);
        for (a, b) in expected.pixels().iter().zip(x_hat.pixels()) {
            assert_eq!(*a, (255.0 * *b as f64 / 0.5).round().clamp(0.0, 255.0) as u8);
        }
    }

    #[test]
    fn scale_out_of_range_rejected() {
        let w = tiny(Architecture::Factorized);
        let x = synthetic_image(8, 8, 0);
        for s in [0.0, -0.5, 1.01, f32::NAN] {
            assert!(matches!(scale_compress(&x, s, &w), Err(Error::InvalidArgument(_))));
        }
        assert!(distortion_gap(&x, &w, 1.0).is_err());
    }

    #[test]
    fn mismatched_fingerprint_refused() {
        let w = tiny(Architecture::Hyperprior);
        let other = ModelWeights::init(ModelConfig {
            init_seed: 4,
            ..w.config().clone()
        })
        .unwrap();
        let f = compress(&synthetic_image(16, 16, 5), &w).unwrap();
        assert!(matches!(decompress(&f, &other), Err(Error::ModelMismatch { .. })));
        let mut tampered = f.clone();
        tampered.fingerprint ^= 1;
        assert!(matches!(decompress(&tampered, &w), Err(Error::ModelMismatch { .. })));
    }

    #[test]
    fn payload_corruption_detected() {
        let w = tiny(Architecture::Hyperprior);
        let f = compress(&synthetic_image(32, 32, 6), &w).unwrap();
        let bytes = f.to_bytes();
        for pos in HEADER_LEN..bytes.len() {
            let mut b = bytes.clone();
            b[pos] ^= 0x5A;
            let g = CompressedFile::from_bytes(&b).unwrap();
            assert!(matches!(decompress(&g, &w), Err(Error::CorruptStream(_))), "byte {pos}");
        }
    }

    #[test]
    fn estimate_tracks_measured_size() {
        for arch in ARCHS {
            let w = tiny(arch);
            let x = synthetic_image(64, 64, 7);
            let measured = 8.0 * compress(&x, &w).unwrap().byte_len() as f64;
            let est = estimate_file_bits(&x, &w, 1.0).unwrap();
            assert!((measured - est).abs() / est < 0.05, "{arch}: measured {measured}, estimate {est}");
        }
    }

    #[test]
    fn sweep_contract() {
        let w = tiny(Architecture::Hyperprior);
        let images: Vec<ImageU8> = (0..2).map(|i| synthetic_image(24, 24, i)).collect();
        let r = sweep_scales(&images, &w, &[0.9, 0.3, 1.0, 0.6]).unwrap();
        assert!(r.failures.is_empty());
        let s: Vec<f32> = r.points.iter().map(|p| p.s).collect();
        assert_eq!(s, vec![0.3, 0.6, 0.9, 1.0]);
        let base = sweep_scales(&images, &w, &[1.0]).unwrap().points[0].clone();
        let direct: Vec<RDPoint> = images.iter().map(|x| rd_point(x, &w, 1.0).unwrap()).collect();
        assert!((base.bpp - (direct[0].bpp + direct[1].bpp) / 2.0).abs() < 1e-12);
        assert_eq!(base, r.points[3]);
    }

    #[test]
    fn sweep_reports_failures_and_continues() {
        let w = tiny(Architecture::Hyperprior);
        // MS-SSIM needs at least 11 pixels per side.
        let images = vec![synthetic_image(24, 24, 0), synthetic_image(8, 8, 1)];
        let r = sweep_scales(&images, &w, &[0.5]).unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].image, 1);
    }

    #[test]
    fn distortion_gap_is_non_negative() {
        let w = tiny(Architecture::Factorized);
        let x = synthetic_image(16, 16, 8);
        let (d_s, d_1) = distortion_gap(&x, &w, 0.5).unwrap();
        assert!(d_s >= 0.0 && d_1 >= 0.0);
    }

    #[test]
    fn anchor_is_highest_rate_model() {
        let images = vec![synthetic_image(16, 16, 9)];
        let models = vec![tiny(Architecture::Hyperprior), tiny(Architecture::Factorized)];
        let rates: Vec<f64> = models.iter().map(|w| rd_point(&images[0], w, 1.0).unwrap().bpp).collect();
        let expected = if rates[0] >= rates[1] { 0 } else { 1 };
        assert_eq!(select_anchor(&models, &images).unwrap(), expected);
    }
}
