use uvrc_core::tooling::{dispersion_stats, latent_histogram, Dispersion, DEFAULT_BINS};
use uvrc_core::{ImageU8, ModelWeights};

use crate::check::Outcome;

const SCALES: [f32; 3] = [0.8, 0.5, 0.2];

fn mean_dispersion(w: &ModelWeights, images: &[ImageU8], s: f32) -> Result<Dispersion, String> {
    let mut acc = Dispersion { variance: 0.0, zero_mass: 0.0, laplacian_b: 0.0 };
    for x in images {
        let d = dispersion_stats(&latent_histogram(x, w, s, DEFAULT_BINS).map_err(|e| e.to_string())?);
        acc.variance += d.variance;
        acc.zero_mass += d.zero_mass;
        acc.laplacian_b += d.laplacian_b;
    }
    let n = images.len() as f64;
    Ok(Dispersion {
        variance: acc.variance / n,
        zero_mass: acc.zero_mass / n,
        laplacian_b: acc.laplacian_b / n,
    })
}

/// Spread of the latent symbols shrinks and the centre bin fills as `s`
/// goes 0.8 → 0.5 → 0.2.
pub fn contraction(w: &ModelWeights, images: &[ImageU8]) -> Outcome {
    let stats: Result<Vec<Dispersion>, String> = SCALES.iter().map(|&s| mean_dispersion(w, images, s)).collect();
    let stats = match stats {
        Ok(s) => s,
        Err(e) => return Outcome::new(false, e),
    };
    let dec = |f: fn(&Dispersion) -> f64| stats.windows(2).all(|p| f(&p[1]) < f(&p[0]));
    let show = |f: fn(&Dispersion) -> f64| stats.iter().map(|d| format!("{:.4}", f(d))).collect::<Vec<_>>().join(" → ");
    let b = |d: &Dispersion| d.laplacian_b;
    let var = |d: &Dispersion| d.variance;
    let zero = |d: &Dispersion| -d.zero_mass;
    Outcome::all(vec![
        Outcome::new(dec(b), format!("b {}", show(b))),
        Outcome::new(dec(var), format!("variance {}", show(var))),
        Outcome::new(dec(zero), format!("centre mass {}", show(|d| d.zero_mass))),
    ])
}
