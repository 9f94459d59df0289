use uvrc_core::model::DistortionMetric;
use uvrc_core::tooling::{export_csv, export_plot, pareto_envelope, PlotAxis};
use uvrc_core::variable_rate::{default_grid, sweep_scales, SweepReport};
use uvrc_core::{ImageU8, ModelWeights, RDCurve, RDPoint};

use crate::check::{non_increasing, series, Outcome};

const MAX_RATE_INVERSION: f64 = 0.02;
const MAX_QUALITY_INVERSION_DB: f64 = 0.1;

/// `{0.1, …, 0.9, 1.0}`.
fn grid() -> Vec<f32> {
    let mut g = default_grid();
    g.push(1.0);
    g
}

fn sweep(w: &ModelWeights, images: &[ImageU8]) -> Result<SweepReport, String> {
    let r = sweep_scales(images, w, &grid()).map_err(|e| e.to_string())?;
    if let Some(f) = r.failures.first() {
        return Err(format!("{} image failures, first: image {} s={} {}", r.failures.len(), f.image, f.scale, f.error));
    }
    Ok(r)
}

/// MS-SSIM on a decibel scale, so the same 0.1 dB tolerance applies.
fn ms_ssim_db(v: f64) -> f64 {
    -10.0 * (1.0 - v).max(1e-12).log10()
}

/// Points ordered by decreasing `s`.
fn descending(points: &[RDPoint]) -> Vec<RDPoint> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| b.s.total_cmp(&a.s));
    p
}

/// Average rate and quality must not increase as `s` decreases: at most
/// one inversion, below 2% relative in rate and 0.1 dB in quality.
pub fn mechanism(w: &ModelWeights, images: &[ImageU8]) -> Outcome {
    let report = match sweep(w, images) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, e),
    };
    let pts = descending(&report.points);
    if pts.len() != grid().len() {
        return Outcome::new(false, format!("{} sweep points, expected {}", pts.len(), grid().len()));
    }
    let bpp: Vec<f64> = pts.iter().map(|p| p.bpp).collect();
    let (quality, axis): (Vec<f64>, &str) = match w.config().metric {
        DistortionMetric::Mse => (pts.iter().map(|p| p.psnr_db).collect(), "PSNR dB"),
        DistortionMetric::MsSsim => (pts.iter().map(|p| ms_ssim_db(p.ms_ssim)).collect(), "MS-SSIM dB"),
    };
    let rate = non_increasing(&bpp, |a, b| (b - a) / a < MAX_RATE_INVERSION);
    let dist = non_increasing(&quality, |a, b| b - a < MAX_QUALITY_INVERSION_DB);
    Outcome::all(vec![
        Outcome::new(
            rate.pass,
            format!(
                "bpp s=1→0.1 [{}] {} inversions (worst +{:.4})",
                series(&bpp, 4),
                rate.inversions,
                rate.worst
            ),
        ),
        Outcome::new(
            dist.pass,
            format!(
                "{axis} [{}] {} inversions (worst +{:.3})",
                series(&quality, 2),
                dist.inversions,
                dist.worst
            ),
        ),
    ])
}

/// Independent dominance filter: keeps points no other point beats on both
/// axes (lower or equal rate and higher or equal PSNR, strictly better on
/// one). Duplicates collapse to one.
fn brute_force_front(points: &[RDPoint]) -> Vec<(f64, f64)> {
    let mut front: Vec<(f64, f64)> = Vec::new();
    for p in points {
        let dominated = points.iter().any(|q| {
            q.bpp <= p.bpp && q.psnr_db >= p.psnr_db && (q.bpp < p.bpp || q.psnr_db > p.psnr_db)
        });
        if !dominated && !front.contains(&(p.bpp, p.psnr_db)) {
            front.push((p.bpp, p.psnr_db));
        }
    }
    front.sort_by(|a, b| a.0.total_cmp(&b.0));
    front
}

/// The high-rate model's sweep reaches the low-rate model's baseline rate,
/// and the envelope over both sweeps is exactly the non-dominated set.
pub fn coverage(low_rate: &ModelWeights, high_rate: &ModelWeights, images: &[ImageU8]) -> Outcome {
    let (low, high) = match (sweep(low_rate, images), sweep(high_rate, images)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(false, e),
    };
    let baseline = low.points.iter().find(|p| p.s == 1.0).map(|p| p.bpp).unwrap_or(f64::NAN);
    let reach = high.points.iter().map(|p| p.bpp).fold(f64::INFINITY, f64::min);
    let curves = [
        RDCurve::new(format!("lambda={}", low_rate.config().lambda), low.points.clone(), true),
        RDCurve::new(format!("lambda={}", high_rate.config().lambda), high.points.clone(), true),
    ];
    let envelope = match pareto_envelope(&curves) {
        Ok(e) => e,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let got: Vec<(f64, f64)> = envelope.points().iter().map(|p| (p.bpp, p.psnr_db)).collect();
    let all: Vec<RDPoint> = curves.iter().flat_map(|c| c.points().to_vec()).collect();
    let want = brute_force_front(&all);

    if let Some(dir) = option_env!("CARGO_TARGET_TMPDIR") {
        let dir = std::path::Path::new(dir).join("acceptance");
        let _ = std::fs::create_dir_all(&dir);
        let mut out = curves.to_vec();
        out.push(envelope.clone());
        let _ = export_csv(&out, dir.join("coverage.csv"));
        let _ = export_plot(&out, PlotAxis::Psnr, dir.join("coverage.svg"));
    }

    Outcome::all(vec![
        Outcome::new(
            reach <= baseline,
            format!("high-rate sweep reaches {reach:.4} bpp vs low-rate baseline {baseline:.4} bpp"),
        ),
        Outcome::new(
            got == want,
            format!("envelope {} points, brute-force front {} points", got.len(), want.len()),
        ),
    ])
}
