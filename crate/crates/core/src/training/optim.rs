use std::collections::BTreeMap;

use crate::nn::{Real, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adaptive-moment optimizer over named tensors.
pub struct Adam<T: Real> {
    lr: f64,
    step: i32,
    m: BTreeMap<String, Vec<T>>,
    v: BTreeMap<String, Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &BTreeMap<String, Tensor<T>>, lr: f64) -> Self {
        let zeros = || params.iter().map(|(k, t)| (k.clone(), vec![T::zero(); t.len()])).collect();
        Adam { lr, step: 0, m: zeros(), v: zeros() }
    }

    /// One update. Parameters without a gradient are left untouched but
    /// still see their moments decay.
    pub fn step(&mut self, params: &mut BTreeMap<String, Tensor<T>>, grads: &BTreeMap<String, Tensor<T>>) {
        self.step += 1;
        let (b1, b2) = (T::c(BETA1), T::c(BETA2));
        let c1 = T::c(1.0 - BETA1.powi(self.step));
        let c2 = T::c(1.0 - BETA2.powi(self.step));
        let (lr, eps) = (T::c(self.lr), T::c(EPSILON));
        for (name, p) in params.iter_mut() {
            let m = self.m.get_mut(name).expect("moment for every parameter");
            let v = self.v.get_mut(name).expect("moment for every parameter");
            let g = grads.get(name);
            for i in 0..p.data.len() {
                let gi = g.map_or(T::zero(), |g| g.data[i]);
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Global L2 norm over all gradients.
pub fn global_norm<T: Real>(grads: &BTreeMap<String, Tensor<T>>) -> f64 {
    grads
        .values()
        .flat_map(|g| g.data.iter())
        .map(|v| v.f64() * v.f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut BTreeMap<String, Tensor<T>>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = T::c(max_norm / norm);
        for g in grads.values_mut() {
            g.data.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}
