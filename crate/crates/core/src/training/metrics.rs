//! Distortion measures on `[0, 1]` images, plain and on the tape.

use crate::error::{shape_err, Error, Result};
use crate::image::ImageF;
use crate::nn::{Real, Tape, Tensor, Var};

/// Per-scale weights for five scales, finest first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
/// Smallest side a scale may have and still be used.
const MIN_SCALE_SIDE: usize = 16;
const FLOOR: f64 = 1e-6;

fn check_dims(a: &ImageF, b: &ImageF) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(shape_err("image dims", a.dims(), b.dims()));
    }
    Ok(())
}

pub fn mse(a: &ImageF, b: &ImageF) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.pixels().len() as f64;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum::<f64>()
        / n)
}

pub fn gaussian_window() -> Vec<f64> {
    let half = (WINDOW / 2) as f64;
    let w: Vec<f64> = (0..WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Scale weights for an image whose shorter side is `min_side`: scales
/// that would fall below 16 pixels are dropped and the rest renormalized.
/// Images shorter than 16 pixels keep the finest scale alone.
pub fn ms_ssim_scale_weights(min_side: usize) -> Result<Vec<f64>> {
    if min_side < WINDOW {
        return Err(Error::InvalidArgument(format!(
            "MS-SSIM needs images of at least {WINDOW} pixels per side, got {min_side}"
        )));
    }
    let kept = (0..MS_SSIM_WEIGHTS.len())
        .take_while(|&j| min_side >> j >= MIN_SCALE_SIDE)
        .count()
        .max(1);
    let w = &MS_SSIM_WEIGHTS[..kept];
    let s: f64 = w.iter().sum();
    Ok(w.iter().map(|v| v / s).collect())
}

/// Per-image, per-channel MS-SSIM of NCHW batches, averaged over channels
/// and then over the batch.
pub fn ms_ssim_var<'t, T: Real>(a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    let shape = a.shape();
    if shape != b.shape() {
        return Err(shape_err("ms_ssim_var", &shape, b.shape()));
    }
    let weights = ms_ssim_scale_weights(shape[2].min(shape[3]))?;
    let win = gaussian_window();
    let (mut x, mut y) = (a, b);
    let mut acc: Option<Var<'t, T>> = None;
    for (j, &wj) in weights.iter().enumerate() {
        if j > 0 {
            x = x.avg_pool2();
            y = y.avg_pool2();
        }
        let mx = x.separable_filter_valid(&win);
        let my = y.separable_filter_valid(&win);
        let sxx = x.square().separable_filter_valid(&win).sub(mx.square());
        let syy = y.square().separable_filter_valid(&win).sub(my.square());
        let sxy = x.mul(y).separable_filter_valid(&win).sub(mx.mul(my));
        let cs_map = sxy
            .scale(T::c(2.0))
            .add_scalar(T::c(C2))
            .div(sxx.add(syy).add_scalar(T::c(C2)));
        let term = if j + 1 == weights.len() {
            let l_map = mx
                .mul(my)
                .scale(T::c(2.0))
                .add_scalar(T::c(C1))
                .div(mx.square().add(my.square()).add_scalar(T::c(C1)));
            l_map.mul(cs_map).mean_hw()
        } else {
            cs_map.mean_hw()
        };
        let powered = term.clamp_min(T::c(FLOOR)).powf(T::c(wj));
        acc = Some(match acc {
            None => powered,
            Some(p) => p.mul(powered),
        });
    }
    Ok(acc.expect("at least one scale").mean())
}

fn batch_of(img: &ImageF) -> Tensor<f64> {
    Tensor::new(
        vec![1, 3, img.height(), img.width()],
        img.to_planar().iter().map(|&v| v as f64).collect(),
    )
}

/// MS-SSIM in `[0, 1]`; 1 for identical images.
pub fn ms_ssim(a: &ImageF, b: &ImageF) -> Result<f64> {
    check_dims(a, b)?;
    if a == b {
        return Ok(1.0);
    }
    let tape = Tape::<f64>::inference();
    let v = ms_ssim_var(tape.constant(batch_of(a)), tape.constant(batch_of(b)))?;
    Ok(v.value().data[0].clamp(0.0, 1.0))
}

/// Mean squared error between two NCHW batches.
pub fn mse_var<'t, T: Real>(a: Var<'t, T>, b: Var<'t, T>) -> Var<'t, T> {
    a.sub(b).square().mean()
}
