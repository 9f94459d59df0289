//! Learned factorized prior: each channel owns a small monotone network
//! mapping a real value to the logit of its CDF. Symbol probabilities are
//! CDF differences at half-integer offsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cdf::{build_cdf_table, QuantizedCDF};
use super::gaussian::{SUPPORT_MAX, SUPPORT_MIN};
use crate::nn::tape::sigmoid;
use crate::nn::{Real, Tensor, Var};

/// Layer widths of the per-channel CDF network.
pub const WIDTHS: [usize; 5] = [1, 3, 3, 3, 1];
const LAYERS: usize = 4;
const INIT_SCALE: f64 = 10.0;
/// Each tail beyond the coded support may hold at most this much mass.
const TABLE_TAIL: f64 = 5e-7;

/// Per-channel CDF network parameters in f64. Matrices are stored raw and
/// pass through softplus to stay positive, keeping the CDF monotone.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorNet {
    channels: usize,
    /// `[C, out, in]` per layer.
    pub matrices: [Vec<f64>; LAYERS],
    /// `[C, out]` per layer.
    pub biases: [Vec<f64>; LAYERS],
    /// `[C, out]` for the first three layers.
    pub factors: [Vec<f64>; LAYERS - 1],
}

#[derive(Default, Clone, Copy)]
struct LayerCache {
    input: [f64; 3],
    pre: [f64; 3],
}

impl PriorNet {
    pub fn zeros(channels: usize) -> Self {
        PriorNet {
            channels,
            matrices: std::array::from_fn(|i| vec![0.0; channels * WIDTHS[i + 1] * WIDTHS[i]]),
            biases: std::array::from_fn(|i| vec![0.0; channels * WIDTHS[i + 1]]),
            factors: std::array::from_fn(|i| vec![0.0; channels * WIDTHS[i + 1]]),
        }
    }

    /// Initial CDF close to a logistic of scale 10 around a random offset.
    pub fn init(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = PriorNet::zeros(channels);
        let scale = INIT_SCALE.powf(1.0 / LAYERS as f64);
        for i in 0..LAYERS {
            let init = (1.0 / scale / WIDTHS[i + 1] as f64).exp_m1().ln();
            net.matrices[i].iter_mut().for_each(|v| *v = init);
            net.biases[i].iter_mut().for_each(|v| *v = rng.gen::<f64>() - 0.5);
        }
        net
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn param_len(&self) -> usize {
        self.matrices.iter().chain(&self.biases).chain(&self.factors).map(Vec::len).sum()
    }

    fn forward(&self, c: usize, x: f64, cache: &mut [LayerCache; LAYERS]) -> f64 {
        let mut h = [x, 0.0, 0.0];
        for i in 0..LAYERS {
            let (din, dout) = (WIDTHS[i], WIDTHS[i + 1]);
            let m = &self.matrices[i][c * dout * din..][..dout * din];
            let b = &self.biases[i][c * dout..][..dout];
            cache[i].input = h;
            let mut next = [0.0; 3];
            for j in 0..dout {
                let mut acc = b[j];
                for k in 0..din {
                    acc += softplus(m[j * din + k]) * h[k];
                }
                cache[i].pre[j] = acc;
                next[j] = if i < LAYERS - 1 {
                    let a = self.factors[i][c * dout + j];
                    acc + a.tanh() * acc.tanh()
                } else {
                    acc
                };
            }
            h = next;
        }
        h[0]
    }

    /// Logit of the channel-`c` CDF at `x`.
    pub fn logit(&self, c: usize, x: f64) -> f64 {
        let mut cache = [LayerCache::default(); LAYERS];
        self.forward(c, x, &mut cache)
    }

    /// Accumulates `d_logit * ∂logit/∂θ` into `grads` and returns `∂logit/∂x`.
    fn backward(&self, c: usize, cache: &[LayerCache; LAYERS], d_logit: f64, grads: &mut PriorNet) -> f64 {
        let mut dh = [d_logit, 0.0, 0.0];
        for i in (0..LAYERS).rev() {
            let (din, dout) = (WIDTHS[i], WIDTHS[i + 1]);
            let mut dpre = [0.0; 3];
            for j in 0..dout {
                let pre = cache[i].pre[j];
                dpre[j] = if i < LAYERS - 1 {
                    let idx = c * dout + j;
                    let ta = self.factors[i][idx].tanh();
                    let tp = pre.tanh();
                    grads.factors[i][idx] += dh[j] * tp * (1.0 - ta * ta);
                    dh[j] * (1.0 + ta * (1.0 - tp * tp))
                } else {
                    dh[j]
                };
            }
            let mut din_grad = [0.0; 3];
            for j in 0..dout {
                grads.biases[i][c * dout + j] += dpre[j];
                for k in 0..din {
                    let idx = c * dout * din + j * din + k;
                    let raw = self.matrices[i][idx];
                    grads.matrices[i][idx] += dpre[j] * cache[i].input[k] * sigmoid(raw);
                    din_grad[k] += dpre[j] * softplus(raw);
                }
            }
            dh = din_grad;
        }
        dh[0]
    }

    /// Probability mass of the unit bin centred on `v` in channel `c`.
    pub fn likelihood(&self, c: usize, v: f64) -> f64 {
        let u = self.logit(c, v + 0.5);
        let l = self.logit(c, v - 0.5);
        let s = if u + l > 0.0 { -1.0 } else { 1.0 };
        (sigmoid(s * u) - sigmoid(s * l)).abs()
    }

    /// Likelihood plus its gradient, accumulated as `g * ∂lik`.
    fn likelihood_with_grad(&self, c: usize, v: f64, g: f64, grads: &mut PriorNet) -> (f64, f64) {
        let mut cu = [LayerCache::default(); LAYERS];
        let mut cl = [LayerCache::default(); LAYERS];
        let u = self.forward(c, v + 0.5, &mut cu);
        let l = self.forward(c, v - 0.5, &mut cl);
        let s = if u + l > 0.0 { -1.0 } else { 1.0 };
        let (su, sl) = (sigmoid(s * u), sigmoid(s * l));
        let diff = su - sl;
        let sign = if diff < 0.0 { -1.0 } else { 1.0 };
        let du = g * sign * s * su * (1.0 - su);
        let dl = -g * sign * s * sl * (1.0 - sl);
        let dv = self.backward(c, &cu, du, grads) + self.backward(c, &cl, dl, grads);
        (diff.abs(), dv)
    }

    /// CDF value at `x` for channel `c`.
    pub fn cdf(&self, c: usize, x: f64) -> f64 {
        sigmoid(self.logit(c, x))
    }

    /// Integer support holding all but `TABLE_TAIL` mass on each side,
    /// clipped to the global symbol bounds.
    pub fn support(&self, c: usize) -> (i32, i32) {
        let lo = (SUPPORT_MIN..=SUPPORT_MAX)
            .find(|&k| self.cdf(c, k as f64 + 0.5) > TABLE_TAIL)
            .unwrap_or(SUPPORT_MAX);
        let hi = (SUPPORT_MIN..=SUPPORT_MAX)
            .rev()
            .find(|&k| sigmoid(-self.logit(c, k as f64 - 0.5)) > TABLE_TAIL)
            .unwrap_or(SUPPORT_MIN);
        if lo <= hi {
            (lo, hi)
        } else {
            (hi, lo)
        }
    }

    /// Per-channel PMF over its support.
    pub fn pmf(&self, c: usize) -> (i32, Vec<f64>) {
        let (lo, hi) = self.support(c);
        (lo, (lo..=hi).map(|k| self.likelihood(c, k as f64)).collect())
    }

    /// One escape-enabled coding table per channel over the full symbol
    /// range.
    pub fn tables(&self) -> Vec<QuantizedCDF> {
        (0..self.channels)
            .map(|c| {
                let lo = SUPPORT_MIN;
                let mut pmf: Vec<f64> = (SUPPORT_MIN..=SUPPORT_MAX).map(|k| self.likelihood(c, k as f64)).collect();
                let total: f64 = pmf.iter().sum();
                if total > 1.0 {
                    pmf.iter_mut().for_each(|p| *p /= total);
                }
                build_cdf_table(&pmf, lo, true).expect("non-empty support")
            })
            .collect()
    }
}

fn softplus(x: f64) -> f64 {
    crate::nn::tape::softplus(x)
}

/// Tape handles for the prior parameters, shaped like [`PriorNet`]'s fields.
#[derive(Clone, Copy)]
pub struct PriorVars<'t, T: Real> {
    pub matrices: [Var<'t, T>; LAYERS],
    pub biases: [Var<'t, T>; LAYERS],
    pub factors: [Var<'t, T>; LAYERS - 1],
}

impl<'t, T: Real> PriorVars<'t, T> {
    fn all(&self) -> Vec<Var<'t, T>> {
        self.matrices.iter().chain(&self.biases).chain(&self.factors).copied().collect()
    }

    fn to_net(&self, channels: usize) -> PriorNet {
        let f = |v: &Var<'t, T>| v.value().data.iter().map(|x| x.f64()).collect::<Vec<f64>>();
        PriorNet {
            channels,
            matrices: std::array::from_fn(|i| f(&self.matrices[i])),
            biases: std::array::from_fn(|i| f(&self.biases[i])),
            factors: std::array::from_fn(|i| f(&self.factors[i])),
        }
    }
}

/// Differentiable per-element likelihood of an NCHW tensor under the prior.
pub fn factorized_likelihood_var<'t, T: Real>(values: Var<'t, T>, prior: &PriorVars<'t, T>) -> Var<'t, T> {
    let v = values.value();
    let (n, c, h, w) = v.nchw();
    let net = prior.to_net(c);
    let hw = h * w;
    let mut lik = Vec::with_capacity(v.len());
    for (i, &x) in v.data.iter().enumerate() {
        lik.push(T::c(net.likelihood((i / hw) % c, x.f64())));
    }
    let mut parents = vec![values];
    parents.extend(prior.all());
    let shapes: Vec<Vec<usize>> = parents.iter().map(|p| p.shape()).collect();
    values.tape().op(Tensor::new(vec![n, c, h, w], lik), &parents, move |g| {
        let mut grads = PriorNet::zeros(c);
        let mut dv = Vec::with_capacity(v.len());
        for (i, (&x, &gi)) in v.data.iter().zip(&g.data).enumerate() {
            let (_, d) = net.likelihood_with_grad((i / hw) % c, x.f64(), gi.f64(), &mut grads);
            dv.push(T::c(d));
        }
        let mut out = vec![Tensor::new(shapes[0].clone(), dv)];
        for (k, data) in grads.matrices.iter().chain(&grads.biases).chain(&grads.factors).enumerate() {
            out.push(Tensor::new(shapes[k + 1].clone(), data.iter().map(|&x| T::c(x)).collect()));
        }
        out
    })
}
