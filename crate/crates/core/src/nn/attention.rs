//! Single-head self-attention over non-overlapping spatial windows, with a
//! residual connection: `x + Wo · softmax(Q Kᵀ / √C) V` per window.

use super::tensor::{Real, Tensor};
use super::tape::Var;

struct Window {
    positions: Vec<usize>,
}

fn windows(h: usize, w: usize, size: usize) -> Vec<Window> {
    let mut out = Vec::new();
    for wy in (0..h).step_by(size) {
        for wx in (0..w).step_by(size) {
            let mut positions = Vec::new();
            for y in wy..(wy + size).min(h) {
                for x in wx..(wx + size).min(w) {
                    positions.push(y * w + x);
                }
            }
            out.push(Window { positions });
        }
    }
    out
}

fn gather<T: Real>(plane: &[T], c: usize, hw: usize, pos: &[usize]) -> Vec<T> {
    let mut x = Vec::with_capacity(pos.len() * c);
    for &p in pos {
        for ch in 0..c {
            x.push(plane[ch * hw + p]);
        }
    }
    x
}

fn scatter_add<T: Real>(plane: &mut [T], c: usize, hw: usize, pos: &[usize], src: &[T]) {
    for (t, &p) in pos.iter().enumerate() {
        for ch in 0..c {
            plane[ch * hw + p] += src[t * c + ch];
        }
    }
}

fn matmul<T: Real>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    T::gemm(m, k, n, T::one(), a, ta, b, tb, T::zero(), &mut c);
    c
}

fn softmax_rows<T: Real>(s: &mut [T], n: usize) {
    for row in s.chunks_mut(n) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

/// Windowed attention block. All weight matrices are `[C, C]`.
pub fn window_attention<'t, T: Real>(
    x: Var<'t, T>,
    wq: Var<'t, T>,
    wk: Var<'t, T>,
    wv: Var<'t, T>,
    wo: Var<'t, T>,
    window: usize,
) -> Var<'t, T> {
    let xv = x.value();
    let (n, c, h, w) = xv.nchw();
    let hw = h * w;
    let (q_w, k_w, v_w, o_w) = (wq.value(), wk.value(), wv.value(), wo.value());
    for m in [&q_w, &k_w, &v_w, &o_w] {
        assert_eq!(m.shape, vec![c, c], "attention weight shape");
    }
    let scale = T::c(1.0 / (c as f64).sqrt());
    let wins = windows(h, w, window);

    let mut out = xv.as_ref().clone();
    for b in 0..n {
        let plane = &xv.data[b * c * hw..][..c * hw];
        for win in &wins {
            let t = win.positions.len();
            let xt = gather(plane, c, hw, &win.positions);
            let q = matmul(t, c, c, &xt, false, &q_w.data, true);
            let k = matmul(t, c, c, &xt, false, &k_w.data, true);
            let v = matmul(t, c, c, &xt, false, &v_w.data, true);
            let mut a = matmul(t, c, t, &q, false, &k, true);
            a.iter_mut().for_each(|s| *s *= scale);
            softmax_rows(&mut a, t);
            let o = matmul(t, t, c, &a, false, &v, false);
            let p = matmul(t, c, c, &o, false, &o_w.data, true);
            scatter_add(&mut out.data[b * c * hw..][..c * hw], c, hw, &win.positions, &p);
        }
    }

    x.tape().op(out, &[x, wq, wk, wv, wo], move |g| {
        let mut dx = g.clone();
        let mut dwq = vec![T::zero(); c * c];
        let mut dwk = vec![T::zero(); c * c];
        let mut dwv = vec![T::zero(); c * c];
        let mut dwo = vec![T::zero(); c * c];
        let acc = |dst: &mut Vec<T>, src: Vec<T>| dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        for b in 0..n {
            let plane = &xv.data[b * c * hw..][..c * hw];
            let gplane = &g.data[b * c * hw..][..c * hw];
            for win in &wins {
                let t = win.positions.len();
                let xt = gather(plane, c, hw, &win.positions);
                let q = matmul(t, c, c, &xt, false, &q_w.data, true);
                let k = matmul(t, c, c, &xt, false, &k_w.data, true);
                let v = matmul(t, c, c, &xt, false, &v_w.data, true);
                let mut a = matmul(t, c, t, &q, false, &k, true);
                a.iter_mut().for_each(|s| *s *= scale);
                softmax_rows(&mut a, t);
                let o = matmul(t, t, c, &a, false, &v, false);

                let dp = gather(gplane, c, hw, &win.positions);
                acc(&mut dwo, matmul(c, t, c, &dp, true, &o, false));
                let d_o = matmul(t, c, c, &dp, false, &o_w.data, false);
                let da = matmul(t, c, t, &d_o, false, &v, true);
                let dv = matmul(t, t, c, &a, true, &d_o, false);
                let mut ds = vec![T::zero(); t * t];
                for i in 0..t {
                    let row = &a[i * t..(i + 1) * t];
                    let drow = &da[i * t..(i + 1) * t];
                    let dot: T = row.iter().zip(drow).map(|(&p, &d)| p * d).sum();
                    for j in 0..t {
                        ds[i * t + j] = row[j] * (drow[j] - dot) * scale;
                    }
                }
                let dq = matmul(t, t, c, &ds, false, &k, false);
                let dk = matmul(t, t, c, &ds, true, &q, false);
                acc(&mut dwq, matmul(c, t, c, &dq, true, &xt, false));
                acc(&mut dwk, matmul(c, t, c, &dk, true, &xt, false));
                acc(&mut dwv, matmul(c, t, c, &dv, true, &xt, false));
                let mut dxt = matmul(t, c, c, &dq, false, &q_w.data, false);
                acc(&mut dxt, matmul(t, c, c, &dk, false, &k_w.data, false));
                acc(&mut dxt, matmul(t, c, c, &dv, false, &v_w.data, false));
                scatter_add(&mut dx.data[b * c * hw..][..c * hw], c, hw, &win.positions, &dxt);
            }
        }
        let sq = |d: Vec<T>| Tensor::new(vec![c, c], d);
        vec![dx, sq(dwq), sq(dwk), sq(dwv), sq(dwo)]
    })
}
