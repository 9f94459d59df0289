//! Single-image transforms with f32 inference tapes.

use super::network::Net;
use super::weights::ModelWeights;
use crate::error::{shape_err, Result};
use crate::image::ImageF;
use crate::latent::TensorF;
use crate::nn::{Tape, Tensor};

fn with_net<R>(w: &ModelWeights, f: impl for<'t> FnOnce(&Net<'t, f32>, &'t Tape<f32>) -> Result<R>) -> Result<R> {
    let tape = Tape::<f32>::inference();
    let net = Net::bind(&tape, w.config(), &w.tensors());
    f(&net, &tape)
}

pub(crate) fn image_tensor(x: &ImageF) -> Tensor<f32> {
    Tensor::new(vec![1, 3, x.height(), x.width()], x.to_planar())
}

/// Latent `y = g_a(x)` of shape `(C_y, H / stride_y, W / stride_y)`.
pub fn analysis(x: &ImageF, w: &ModelWeights) -> Result<TensorF> {
    let s = w.config().stride_y;
    if x.height() % s != 0 || x.width() % s != 0 {
        return Err(shape_err("analysis: dims must be multiples of stride_y", s, (x.height(), x.width())));
    }
    with_net(w, |net, tape| {
        let y = net.g_a(tape.constant(image_tensor(x)))?;
        Ok(TensorF::from_batch(&y.value()))
    })
}

/// Reconstruction `g_s(ŷ)` clamped to `[0, 1]`.
pub fn synthesis(y_hat: &TensorF, w: &ModelWeights) -> Result<ImageF> {
    let [c, h, wd] = y_hat.shape();
    if c != w.config().latent_channels {
        return Err(shape_err("synthesis latent channels", w.config().latent_channels, c));
    }
    with_net(w, |net, tape| {
        let x = net.g_s(tape.constant(y_hat.to_batch()))?;
        let s = w.config().stride_y;
        Ok(ImageF::from_planar_clamped(h * s, wd * s, &x.value().data))
    })
}

/// Hyper-latent `z = h_a(y)`.
pub fn hyper_analysis(y: &TensorF, w: &ModelWeights) -> Result<TensorF> {
    let cfg = w.config();
    let [c, h, wd] = y.shape();
    let r = cfg.stride_z / cfg.stride_y;
    if c != cfg.latent_channels || h % r != 0 || wd % r != 0 {
        return Err(shape_err("hyper_analysis", (cfg.latent_channels, r), y.shape()));
    }
    with_net(w, |net, tape| {
        let z = net.h_a(tape.constant(y.to_batch()))?;
        Ok(TensorF::from_batch(&z.value()))
    })
}

/// `(mu, sigma)` for `y` given the decoded hyper-latent.
pub fn hyper_synthesis(z_hat: &TensorF, w: &ModelWeights) -> Result<(TensorF, TensorF)> {
    let cfg = w.config();
    if z_hat.shape()[0] != cfg.hyper_channels {
        return Err(shape_err("hyper_synthesis channels", cfg.hyper_channels, z_hat.shape()[0]));
    }
    with_net(w, |net, tape| {
        let (mu, sigma) = net.h_s(tape.constant(z_hat.to_batch()))?;
        Ok((TensorF::from_batch(&mu.value()), TensorF::from_batch(&sigma.value())))
    })
}

/// Relaxed pass used in training, for one image: returns the clamped
/// reconstruction and the estimated total bits of `z` and `y`.
pub fn forward_train(x: &ImageF, w: &ModelWeights, seed: u64) -> Result<(ImageF, f64)> {
    let s = w.config().pad_stride();
    if x.height() % s != 0 || x.width() % s != 0 {
        return Err(shape_err("forward_train: dims must be multiples of", s, (x.height(), x.width())));
    }
    with_net(w, |net, tape| {
        let pass = net.train_pass(tape.constant(image_tensor(x)), seed, 0)?;
        let img = ImageF::from_planar_clamped(x.height(), x.width(), &pass.x_hat.value().data);
        let total = pass.bits_y.value().data[0] as f64 + pass.bits_z.value().data[0] as f64;
        Ok((img, total))
    })
}

/// Per-element likelihood of integer symbols under the factorized prior.
pub fn factorized_likelihood(z_sym: &TensorF, w: &ModelWeights) -> Result<TensorF> {
    let net = w.prior_net();
    let [c, h, wd] = z_sym.shape();
    if c != net.channels() {
        return Err(shape_err("factorized_likelihood channels", net.channels(), c));
    }
    let data = z_sym
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| net.likelihood(i / (h * wd), v as f64) as f32)
        .collect();
    TensorF::new(z_sym.shape(), data)
}
