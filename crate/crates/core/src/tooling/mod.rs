//! Rate-distortion points and curves, envelopes, latent histograms and
//! CSV/plot export.

mod csv_io;
mod histogram;
mod plot;

pub use csv_io::{export_csv, export_histograms_csv, import_csv};
pub use histogram::{dispersion_stats, latent_histogram, Dispersion, Histogram, DEFAULT_BINS};
pub use plot::{export_plot, PlotAxis};

use crate::error::{shape_err, Error, Result};
use crate::image::ImageU8;
use crate::model::ModelWeights;
use crate::training::ms_ssim;
use crate::variable_rate::{metric_distortion, scale_compress, scale_decompress};

/// PSNR returned for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Tolerance under which two bpp values count as the same point.
pub const BPP_EPSILON: f64 = 1e-9;

/// `10·log10(255² / MSE)` on the 8-bit scale, capped at 100 dB.
pub fn psnr(a: &ImageU8, b: &ImageU8) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(shape_err("psnr", a.dims(), b.dims()));
    }
    let sse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    let mse = sse / a.pixels().len() as f64;
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RDPoint {
    /// `8 · file bytes / (H·W)`.
    pub bpp: f64,
    pub psnr_db: f64,
    pub ms_ssim: f64,
    /// Distortion in the model's training metric (MSE on `[0, 1]` or
    /// `1 − MS-SSIM`).
    pub distortion: f64,
    pub s: f32,
    pub fingerprint: u64,
    pub lambda: f64,
}

/// Points sorted by bpp with no two closer than [`BPP_EPSILON`].
#[derive(Clone, Debug, PartialEq)]
pub struct RDCurve {
    pub label: String,
    points: Vec<RDPoint>,
    /// Drawn dashed (scale sweeps) rather than solid (reference curves).
    pub dashed: bool,
}

impl RDCurve {
    /// Sorts by bpp. Of points within [`BPP_EPSILON`] of each other only
    /// the one with the highest PSNR is kept.
    pub fn new(label: impl Into<String>, mut points: Vec<RDPoint>, dashed: bool) -> Self {
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp).then(b.psnr_db.total_cmp(&a.psnr_db)));
        let mut merged: Vec<RDPoint> = Vec::with_capacity(points.len());
        for p in points {
            match merged.last_mut() {
                Some(last) if (p.bpp - last.bpp).abs() <= BPP_EPSILON => {
                    if p.psnr_db > last.psnr_db {
                        *last = p;
                    }
                }
                _ => merged.push(p),
            }
        }
        RDCurve {
            label: label.into(),
            points: merged,
            dashed,
        }
    }

    pub fn points(&self) -> &[RDPoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Codes `x` at scale `s` and measures the real file size and both
/// quality metrics on the 8-bit reconstruction.
pub fn rd_point(x: &ImageU8, w: &ModelWeights, s: f32) -> Result<RDPoint> {
    let f = scale_compress(x, s, w)?;
    let x_hat = scale_decompress(&f, w)?;
    let cfg = w.config();
    Ok(RDPoint {
        bpp: 8.0 * f.byte_len() as f64 / (x.height() * x.width()) as f64,
        psnr_db: psnr(x, &x_hat)?,
        ms_ssim: ms_ssim(&x.to_float(), &x_hat.to_float())?,
        distortion: metric_distortion(x, &x_hat, cfg.metric)?,
        s,
        fingerprint: w.fingerprint(),
        lambda: cfg.lambda,
    })
}

/// Points of all curves not dominated in (lower bpp, higher PSNR).
pub fn pareto_envelope(curves: &[RDCurve]) -> Result<RDCurve> {
    pareto_envelope_by(curves, |p| p.psnr_db)
}

/// [`pareto_envelope`] with a caller-chosen quality axis (higher is better).
pub fn pareto_envelope_by(curves: &[RDCurve], quality: impl Fn(&RDPoint) -> f64) -> Result<RDCurve> {
    let mut all: Vec<&RDPoint> = curves.iter().flat_map(|c| c.points.iter()).collect();
    if all.is_empty() {
        return Err(Error::InvalidArgument("envelope needs at least one non-empty curve".into()));
    }
    all.sort_by(|a, b| a.bpp.total_cmp(&b.bpp).then(quality(b).total_cmp(&quality(a))));
    let mut best = f64::NEG_INFINITY;
    let mut kept = Vec::new();
    for p in all {
        // Sorted by rate, so p is dominated iff an earlier point reaches
        // at least its quality.
        if quality(p) > best {
            best = quality(p);
            kept.push(p.clone());
        }
    }
    Ok(RDCurve::new("envelope", kept, false))
}
