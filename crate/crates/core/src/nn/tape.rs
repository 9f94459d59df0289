//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Calling
//! [`Tape::backward`] walks the records in reverse and accumulates
//! gradients for every leaf created with [`Tape::param`]. Inference runs
//! use a tape built with [`Tape::inference`], which never records closures.

use std::cell::RefCell;
use std::rc::Rc;

use super::conv::{col2im, im2col, ConvGeom};
use super::tensor::{cm_to_nchw, nchw_to_cm, Real, Tensor};

type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Tensor<T>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn<T>>,
}

pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    record: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    tape: &'t Tape<T>,
    id: usize,
}

/// Gradients produced by one backward pass, indexed by variable.
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads[v.id].as_ref()
    }

    pub fn take(&mut self, v: Var<'_, T>) -> Option<Tensor<T>> {
        self.grads[v.id].take()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            record: true,
        }
    }

    /// A tape that evaluates values only.
    pub fn inference() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            record: false,
        }
    }

    fn push(&self, value: Tensor<T>, parents: Vec<usize>, requires_grad: bool, backward: Option<BackwardFn<T>>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            parents,
            requires_grad,
            backward,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        let rg = self.record;
        self.push(value, vec![], rg, None)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, vec![], false, None)
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Records an operation. `backward` maps the output gradient to one
    /// gradient per parent, in order.
    pub fn op<'t, F>(&'t self, value: Tensor<T>, parents: &[Var<'t, T>], backward: F) -> Var<'t, T>
    where
        F: Fn(&Tensor<T>) -> Vec<Tensor<T>> + 'static,
    {
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let rg = self.record && ids.iter().any(|&i| self.requires(i));
        let bw: Option<BackwardFn<T>> = if rg { Some(Box::new(backward)) } else { None };
        self.push(value, ids, rg, bw)
    }

    pub fn value(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Grads<T> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        let lv = &nodes[loss.id].value;
        assert_eq!(lv.len(), 1, "backward needs a scalar loss");
        grads[loss.id] = Some(Tensor::full(&lv.shape, T::one()));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(bw) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let parent_grads = bw(&g);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape, nodes[p].value.shape, "gradient shape for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            }
        }
        Grads { grads }
    }
}

fn reduce_channels<T: Real>(g: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = g.nchw();
    let mut out = vec![T::zero(); c];
    for b in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            *o += g.data[(b * c + ch) * h * w..][..h * w].iter().copied().sum::<T>();
        }
    }
    Tensor::new(vec![c], out)
}

fn add_channel_bias<T: Real>(x: &mut Tensor<T>, bias: &Tensor<T>) {
    let (n, c, h, w) = x.nchw();
    for b in 0..n {
        for ch in 0..c {
            let bv = bias.data[ch];
            for v in &mut x.data[(b * c + ch) * h * w..][..h * w] {
                *v += bv;
            }
        }
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape.clone()
    }

    fn unary(self, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var<'t, T> {
        let x = self.value();
        let y = Rc::new(x.map(f));
        let yc = Rc::clone(&y);
        self.tape.op((*y).clone(), &[self], move |g| {
            let data = g
                .data
                .iter()
                .zip(&x.data)
                .zip(&yc.data)
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Tensor::new(g.shape.clone(), data)]
        })
    }

    pub fn add(self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape, b.shape, "add");
        self.tape.op(a.zip_map(&b, |x, y| x + y), &[self, other], |g| vec![g.clone(), g.clone()])
    }

    pub fn sub(self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape, b.shape, "sub");
        self.tape.op(a.zip_map(&b, |x, y| x - y), &[self, other], |g| vec![g.clone(), g.map(|v| -v)])
    }

    pub fn mul(self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape, b.shape, "mul");
        let out = a.zip_map(&b, |x, y| x * y);
        self.tape.op(out, &[self, other], move |g| vec![g.zip_map(&b, |g, y| g * y), g.zip_map(&a, |g, x| g * x)])
    }

    pub fn div(self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape, b.shape, "div");
        let out = a.zip_map(&b, |x, y| x / y);
        self.tape.op(out, &[self, other], move |g| {
            let ga = g.zip_map(&b, |g, y| g / y);
            let mut gb = g.zip_map(&a, |g, x| g * x);
            for (v, &y) in gb.data.iter_mut().zip(&b.data) {
                *v = -*v / (y * y);
            }
            vec![ga, gb]
        })
    }

    /// Adds a tensor that is not differentiated (e.g. quantization noise).
    pub fn add_const(self, c: &Tensor<T>) -> Var<'t, T> {
        let a = self.value();
        assert_eq!(a.shape, c.shape, "add_const");
        self.tape.op(a.zip_map(c, |x, y| x + y), &[self], |g| vec![g.clone()])
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        self.unary(|x| x * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: T) -> Var<'t, T> {
        self.unary(|x| x + c, |_, _| T::one())
    }

    pub fn square(self) -> Var<'t, T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn sqrt(self) -> Var<'t, T> {
        self.unary(|x| x.sqrt(), |_, y| T::c(0.5) / y)
    }

    pub fn ln(self) -> Var<'t, T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn powf(self, e: T) -> Var<'t, T> {
        self.unary(|x| x.powf(e), move |x, _| e * x.powf(e - T::one()))
    }

    pub fn tanh(self) -> Var<'t, T> {
        self.unary(|x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn relu(self) -> Var<'t, T> {
        self.unary(|x| x.max(T::zero()), |x, _| if x > T::zero() { T::one() } else { T::zero() })
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(self) -> Var<'t, T> {
        self.unary(softplus, |x, _| sigmoid(x))
    }

    /// `max(x, c)` with zero gradient where the bound is active.
    pub fn clamp_min(self, c: T) -> Var<'t, T> {
        self.unary(|x| x.max(c), move |x, _| if x >= c { T::one() } else { T::zero() })
    }

    /// `max(x, c)`. Where the bound is active the gradient still flows if
    /// a descent step would raise `x`, so bounded elements can recover.
    pub fn lower_bound(self, c: T) -> Var<'t, T> {
        let x = self.value();
        self.tape.op(x.map(|v| v.max(c)), &[self], move |g| {
            let data = g
                .data
                .iter()
                .zip(&x.data)
                .map(|(&g, &v)| if v >= c || g < T::zero() { g } else { T::zero() })
                .collect();
            vec![Tensor::new(g.shape.clone(), data)]
        })
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t, T> {
        let a = self.value();
        assert_eq!(a.len(), shape.iter().product::<usize>(), "reshape");
        let old = a.shape.clone();
        self.tape
            .op(Tensor::new(shape.to_vec(), a.data.clone()), &[self], move |g| vec![Tensor::new(old.clone(), g.data.clone())])
    }

    pub fn sum(self) -> Var<'t, T> {
        let a = self.value();
        let shape = a.shape.clone();
        self.tape.op(Tensor::scalar(a.sum()), &[self], move |g| vec![Tensor::full(&shape, g.data[0])])
    }

    pub fn mean(self) -> Var<'t, T> {
        let n = T::c(self.value().len() as f64);
        self.sum().scale(T::one() / n)
    }

    /// Channel range `[lo, hi)` of an NCHW tensor.
    pub fn slice_channels(self, lo: usize, hi: usize) -> Var<'t, T> {
        let a = self.value();
        let (n, c, h, w) = a.nchw();
        assert!(lo < hi && hi <= c, "slice_channels");
        let hw = h * w;
        let mut out = Vec::with_capacity(n * (hi - lo) * hw);
        for b in 0..n {
            out.extend_from_slice(&a.data[(b * c + lo) * hw..(b * c + hi) * hw]);
        }
        self.tape.op(Tensor::new(vec![n, hi - lo, h, w], out), &[self], move |g| {
            let mut full = Tensor::zeros(&[n, c, h, w]);
            for b in 0..n {
                full.data[(b * c + lo) * hw..(b * c + hi) * hw]
                    .copy_from_slice(&g.data[b * (hi - lo) * hw..(b + 1) * (hi - lo) * hw]);
            }
            vec![full]
        })
    }

    /// Spatial mean of an NCHW tensor, giving an `N×C` tensor.
    pub fn mean_hw(self) -> Var<'t, T> {
        let a = self.value();
        let (n, c, h, w) = a.nchw();
        let hw = h * w;
        let inv = T::one() / T::c(hw as f64);
        let out: Vec<T> = a.data.chunks(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        self.tape.op(Tensor::new(vec![n, c], out), &[self], move |g| {
            let mut full = Vec::with_capacity(n * c * hw);
            for &gv in &g.data {
                full.extend(std::iter::repeat(gv * inv).take(hw));
            }
            vec![Tensor::new(vec![n, c, h, w], full)]
        })
    }

    /// 2×2 average pooling (odd trailing rows/columns are dropped).
    pub fn avg_pool2(self) -> Var<'t, T> {
        let a = self.value();
        let (n, c, h, w) = a.nchw();
        let (oh, ow) = (h / 2, w / 2);
        let q = T::c(0.25);
        let mut out = vec![T::zero(); n * c * oh * ow];
        for p in 0..n * c {
            let src = &a.data[p * h * w..][..h * w];
            for y in 0..oh {
                for x in 0..ow {
                    let s = src[2 * y * w + 2 * x]
                        + src[2 * y * w + 2 * x + 1]
                        + src[(2 * y + 1) * w + 2 * x]
                        + src[(2 * y + 1) * w + 2 * x + 1];
                    out[(p * oh + y) * ow + x] = s * q;
                }
            }
        }
        self.tape.op(Tensor::new(vec![n, c, oh, ow], out), &[self], move |g| {
            let mut gx = vec![T::zero(); n * c * h * w];
            for p in 0..n * c {
                let dst = &mut gx[p * h * w..][..h * w];
                for y in 0..oh {
                    for x in 0..ow {
                        let v = g.data[(p * oh + y) * ow + x] * q;
                        dst[2 * y * w + 2 * x] = v;
                        dst[2 * y * w + 2 * x + 1] = v;
                        dst[(2 * y + 1) * w + 2 * x] = v;
                        dst[(2 * y + 1) * w + 2 * x + 1] = v;
                    }
                }
            }
            vec![Tensor::new(vec![n, c, h, w], gx)]
        })
    }

    /// Depthwise separable filtering with `taps` along both axes, valid
    /// region only.
    pub fn separable_filter_valid(self, taps: &[f64]) -> Var<'t, T> {
        let a = self.value();
        let (n, c, h, w) = a.nchw();
        let t = taps.len();
        assert!(h >= t && w >= t, "filter larger than input");
        let taps: Vec<T> = taps.iter().map(|&v| T::c(v)).collect();
        let (oh, ow) = (h - t + 1, w - t + 1);
        let mut out = vec![T::zero(); n * c * oh * ow];
        let mut tmp = vec![T::zero(); h * ow];
        for p in 0..n * c {
            let src = &a.data[p * h * w..][..h * w];
            for y in 0..h {
                for x in 0..ow {
                    tmp[y * ow + x] = (0..t).map(|k| taps[k] * src[y * w + x + k]).sum();
                }
            }
            let dst = &mut out[p * oh * ow..][..oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    dst[y * ow + x] = (0..t).map(|k| taps[k] * tmp[(y + k) * ow + x]).sum();
                }
            }
        }
        self.tape.op(Tensor::new(vec![n, c, oh, ow], out), &[self], move |g| {
            let mut gx = vec![T::zero(); n * c * h * w];
            let mut gtmp = vec![T::zero(); h * ow];
            for p in 0..n * c {
                gtmp.iter_mut().for_each(|v| *v = T::zero());
                let gp = &g.data[p * oh * ow..][..oh * ow];
                for y in 0..oh {
                    for x in 0..ow {
                        let gv = gp[y * ow + x];
                        for k in 0..t {
                            gtmp[(y + k) * ow + x] += taps[k] * gv;
                        }
                    }
                }
                let dst = &mut gx[p * h * w..][..h * w];
                for y in 0..h {
                    for x in 0..ow {
                        let gv = gtmp[y * ow + x];
                        for k in 0..t {
                            dst[y * w + x + k] += taps[k] * gv;
                        }
                    }
                }
            }
            vec![Tensor::new(vec![n, c, h, w], gx)]
        })
    }

    /// Strided 2-d convolution. `weight` is `[out, in, k, k]`, `bias` is `[out]`.
    pub fn conv2d(self, weight: Var<'t, T>, bias: Option<Var<'t, T>>, stride: usize, pad: usize) -> Var<'t, T> {
        let x = self.value();
        let wt = weight.value();
        let (n, cin, h, w) = x.nchw();
        let (cout, wcin, k, k2) = wt.nchw();
        assert_eq!((wcin, k), (cin, k2), "conv2d weight shape {:?} for input {:?}", wt.shape, x.shape);
        let g = ConvGeom::new(cin, h, w, k, stride, pad);
        let cols = im2col(&x.data, n, &g);
        let p = n * g.oh * g.ow;
        let rows = g.col_rows();
        let mut out_cm = vec![T::zero(); cout * p];
        T::gemm(cout, rows, p, T::one(), &wt.data, false, &cols, false, T::zero(), &mut out_cm);
        let mut out = Tensor::new(vec![n, cout, g.oh, g.ow], cm_to_nchw(&out_cm, n, cout, g.oh * g.ow));
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            add_channel_bias(&mut out, &b.value());
            parents.push(b);
        }
        let has_bias = bias.is_some();
        let wshape = wt.shape.clone();
        self.tape.op(out, &parents, move |gout| {
            let gcm = nchw_to_cm(&gout.data, n, cout, g.oh * g.ow);
            let mut dw = vec![T::zero(); cout * rows];
            T::gemm(cout, p, rows, T::one(), &gcm, false, &cols, true, T::zero(), &mut dw);
            let mut dcols = vec![T::zero(); rows * p];
            T::gemm(rows, cout, p, T::one(), &wt.data, true, &gcm, false, T::zero(), &mut dcols);
            let dx = col2im(&dcols, n, &g);
            let mut grads = vec![Tensor::new(vec![n, cin, h, w], dx), Tensor::new(wshape.clone(), dw)];
            if has_bias {
                grads.push(reduce_channels(gout));
            }
            grads
        })
    }

    /// Transposed convolution. `weight` is `[in, out, k, k]`, `bias` is `[out]`.
    #[allow(clippy::too_many_arguments)]
    pub fn conv_transpose2d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Var<'t, T> {
        let x = self.value();
        let wt = weight.value();
        let (n, cin, h, w) = x.nchw();
        let (wcin, cout, k, _) = wt.nchw();
        assert_eq!(wcin, cin, "conv_transpose2d weight shape {:?} for input {:?}", wt.shape, x.shape);
        let oh = (h - 1) * stride + k + out_pad - 2 * pad;
        let ow = (w - 1) * stride + k + out_pad - 2 * pad;
        let g = ConvGeom::new(cout, oh, ow, k, stride, pad);
        debug_assert_eq!((g.oh, g.ow), (h, w));
        let p = n * h * w;
        let rows = g.col_rows();
        let x_cm = nchw_to_cm(&x.data, n, cin, h * w);
        let mut cols = vec![T::zero(); rows * p];
        T::gemm(rows, cin, p, T::one(), &wt.data, true, &x_cm, false, T::zero(), &mut cols);
        let mut out = Tensor::new(vec![n, cout, oh, ow], col2im(&cols, n, &g));
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            add_channel_bias(&mut out, &b.value());
            parents.push(b);
        }
        let has_bias = bias.is_some();
        let wshape = wt.shape.clone();
        self.tape.op(out, &parents, move |gout| {
            let gcols = im2col(&gout.data, n, &g);
            let mut dx_cm = vec![T::zero(); cin * p];
            T::gemm(cin, rows, p, T::one(), &wt.data, false, &gcols, false, T::zero(), &mut dx_cm);
            let mut dw = vec![T::zero(); cin * rows];
            T::gemm(cin, p, rows, T::one(), &x_cm, false, &gcols, true, T::zero(), &mut dw);
            let mut grads = vec![
                Tensor::new(vec![n, cin, h, w], cm_to_nchw(&dx_cm, n, cin, h * w)),
                Tensor::new(wshape.clone(), dw),
            ];
            if has_bias {
                grads.push(reduce_channels(gout));
            }
            grads
        })
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Real>(x: T) -> T {
    if x > T::c(20.0) {
        x
    } else {
        x.max(T::zero()) + (-x.abs()).exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference check of d(sum(f(x) * r))/dx for a random
    /// projection r, over every input element.
    fn check_op(shape: &[usize], f: impl Fn(Var<'_, f64>) -> Var<'_, f64>) {
        let n: usize = shape.iter().product();
        let x0: Vec<f64> = (0..n).map(|i| 0.3 + ((i * 37 % 17) as f64) / 9.0).collect();
        let eval = |x: &[f64]| -> (f64, Option<Vec<f64>>) {
            let tape = Tape::new();
            let v = tape.param(Tensor::new(shape.to_vec(), x.to_vec()));
            let y = f(v);
            let r: Vec<f64> = (0..y.value().len()).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
            let rv = tape.constant(Tensor::new(y.shape(), r));
            let loss = y.mul(rv).sum();
            let grads = tape.backward(loss);
            (loss.value().data[0], grads.get(v).map(|g| g.data.clone()))
        };
        let (_, g) = eval(&x0);
        let g = g.expect("gradient");
        let h = 1e-6;
        for i in 0..n {
            let mut xp = x0.clone();
            xp[i] += h;
            let mut xm = x0.clone();
            xm[i] -= h;
            let fd = (eval(&xp).0 - eval(&xm).0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "elem {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn elementwise_gradients() {
        check_op(&[2, 3], |x| x.square().sqrt().ln());
        check_op(&[5], |x| x.tanh().softplus().powf(1.7));
        check_op(&[4], |x| x.add(x.scale(2.0)).div(x.add_scalar(1.0)));
        check_op(&[2, 2], |x| x.mul(x).sub(x).mean().reshape(&[1]));
    }

    #[test]
    fn structural_gradients() {
        check_op(&[2, 3, 4, 4], |x| x.avg_pool2());
        check_op(&[1, 2, 6, 7], |x| x.separable_filter_valid(&[0.2, 0.5, 0.3]));
        check_op(&[2, 4, 2, 3], |x| x.slice_channels(1, 3).mean_hw());
    }

    #[test]
    fn conv_gradients_wrt_input_and_weights() {
        let w: Vec<f64> = (0..3 * 2 * 9).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect();
        let b = vec![0.1, -0.2, 0.3];
        check_op(&[2, 2, 5, 6], |x| {
            let t = x.tape();
            let wv = t.constant(Tensor::new(vec![3, 2, 3, 3], w.clone()));
            let bv = t.constant(Tensor::new(vec![3], b.clone()));
            x.conv2d(wv, Some(bv), 2, 1)
        });
        check_op(&[3, 2, 3, 3], |wv| {
            let t = wv.tape();
            let x = t.constant(Tensor::new(vec![1, 2, 6, 6], (0..72).map(|i| (i as f64).cos()).collect()));
            x.conv2d(wv, None, 2, 1)
        });
        check_op(&[1, 2, 3, 3], |x| {
            let t = x.tape();
            let wv = t.constant(Tensor::new(vec![2, 3, 3, 3], w.clone()));
            let bv = t.constant(Tensor::new(vec![3], b.clone()));
            x.conv_transpose2d(wv, Some(bv), 2, 1, 1)
        });
        check_op(&[2, 3, 3, 3], |wv| {
            let t = wv.tape();
            let x = t.constant(Tensor::new(vec![2, 2, 2, 3], (0..24).map(|i| (i as f64).sin()).collect()));
            x.conv_transpose2d(wv, None, 2, 1, 1)
        });
    }

    #[test]
    fn lower_bound_gradient_gating() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::new(vec![4], vec![0.5, -1.0, -1.0, 2.0]));
        let g = tape.constant(Tensor::new(vec![4], vec![1.0, 1.0, -1.0, -3.0]));
        let y = x.lower_bound(0.0);
        assert_eq!(y.value().data, vec![0.5, 0.0, 0.0, 2.0]);
        let grads = tape.backward(y.mul(g).sum());
        // Bound active at elements 1 and 2; only the one whose descent step
        // raises x keeps its gradient.
        assert_eq!(grads.get(x).unwrap().data, vec![1.0, 0.0, -1.0, -3.0]);
    }

    #[test]
    fn transposed_conv_output_size() {
        let tape = Tape::<f32>::inference();
        let x = tape.constant(Tensor::zeros(&[1, 4, 2, 2]));
        let w = tape.constant(Tensor::zeros(&[4, 3, 5, 5]));
        assert_eq!(x.conv_transpose2d(w, None, 2, 2, 1).shape(), vec![1, 3, 4, 4]);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let tape = Tape::<f64>::inference();
        let xd: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let x = tape.constant(Tensor::new(vec![1, 1, 4, 4], xd.clone()));
        let w = tape.constant(Tensor::new(vec![1, 1, 3, 3], vec![0., 1., 0., 1., -4., 1., 0., 1., 0.]));
        let y = x.conv2d(w, None, 1, 1).value();
        // Interior point (1,1): 1 + 4 + 6 + 9 - 4*5
        assert_eq!(y.data[5], 1.0 + 4.0 + 6.0 + 9.0 - 20.0);
        // Corner (0,0) sees zero padding: 1 + 4 - 0
        assert_eq!(y.data[0], 1.0 + 4.0);
    }

    #[test]
    fn inference_tape_records_no_gradients() {
        let tape = Tape::<f32>::inference();
        let p = tape.param(Tensor::full(&[3], 2.0));
        let loss = p.square().sum();
        let grads = tape.backward(loss);
        assert!(grads.get(p).is_none());
        assert_eq!(loss.value().data[0], 12.0);
    }
}
