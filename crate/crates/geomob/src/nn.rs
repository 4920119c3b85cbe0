//! Dense building blocks shared by the alignment and distillation trainers:
//! GEMM-backed linear layers, a ReLU MLP, AdamW, and row normalization.
//!
//! Everything is f64. Gradients are exact analytic derivatives of the
//! forward computation and are verified against finite differences in tests.

use crate::error::{Error, Result};
use rand::Rng;
use rand_pcg::Pcg64Mcg;

/// C(m x n) = A(m x k) . B(k x n), all row-major.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    if m == 0 || k == 0 || n == 0 {
        return c;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
    c
}

/// C(m x n) = A^T . B where A is (k x m) row-major and B is (k x n).
pub fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    if m == 0 || k == 0 || n == 0 {
        return c;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
    c
}

/// C(m x n) = A . B^T where A is (m x k) and B is (n x k) row-major.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = vec![0.0; m * n];
    if m == 0 || k == 0 || n == 0 {
        return c;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
    c
}

pub fn glorot_uniform(rng: &mut Pcg64Mcg, in_dim: usize, out_dim: usize) -> Vec<f64> {
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    (0..in_dim * out_dim).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Dense layer, weight stored (in_dim x out_dim) row-major.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Option<Vec<f64>>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, bias: bool, rng: &mut Pcg64Mcg) -> Self {
        Linear {
            in_dim,
            out_dim,
            w: glorot_uniform(rng, in_dim, out_dim),
            b: bias.then(|| vec![0.0; out_dim]),
        }
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut y = matmul(x, &self.w, n, self.in_dim, self.out_dim);
        if let Some(b) = &self.b {
            for r in 0..n {
                for (y_j, b_j) in y[r * self.out_dim..(r + 1) * self.out_dim].iter_mut().zip(b) {
                    *y_j += b_j;
                }
            }
        }
        y
    }

    /// Returns (dW, db, dX).
    pub fn backward(&self, x: &[f64], dy: &[f64], n: usize) -> (Vec<f64>, Option<Vec<f64>>, Vec<f64>) {
        let dw = matmul_tn(x, dy, self.in_dim, n, self.out_dim);
        let db = self.b.as_ref().map(|_| {
            let mut db = vec![0.0; self.out_dim];
            for r in 0..n {
                for (d, g) in db.iter_mut().zip(&dy[r * self.out_dim..(r + 1) * self.out_dim]) {
                    *d += g;
                }
            }
            db
        });
        let dx = matmul_nt(dy, &self.w, n, self.out_dim, self.in_dim);
        (dw, db, dx)
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.as_ref().map_or(0, |b| b.len())
    }
}

/// ReLU MLP: linear layers with ReLU on every hidden activation.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Per-layer inputs plus the final output, as produced by `forward_cached`.
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    n: usize,
}

#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub dw: Vec<Vec<f64>>,
    pub db: Vec<Option<Vec<f64>>>,
}

impl Mlp {
    /// `dims` = [in, hidden..., out]; ReLU after every layer but the last.
    pub fn new(dims: &[usize], bias: bool, rng: &mut Pcg64Mcg) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Validation(format!("bad MLP dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], bias, rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        self.forward_cached(x, n).0
    }

    pub fn forward_cached(&self, x: &[f64], n: usize) -> (Vec<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            inputs.push(cur.clone());
            let mut y = layer.forward(&cur, n);
            if li + 1 < self.layers.len() {
                for v in y.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            cur = y;
        }
        (cur, MlpCache { inputs, n })
    }

    /// Backprop from d(out); returns parameter grads and d(in).
    pub fn backward(&self, cache: &MlpCache, dout: &[f64]) -> (MlpGrad, Vec<f64>) {
        let n = cache.n;
        let mut dw = vec![Vec::new(); self.layers.len()];
        let mut db = vec![None; self.layers.len()];
        let mut grad = dout.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let x = &cache.inputs[li];
            if li + 1 < self.layers.len() {
                // Through the ReLU: the next layer's cached input is this
                // layer's post-activation; zero the gradient where it was
                // clipped.
                for (g, y) in grad.iter_mut().zip(&cache.inputs[li + 1]) {
                    if *y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let (dwi, dbi, dx) = layer.backward(x, &grad, n);
            dw[li] = dwi;
            db[li] = dbi;
            grad = dx;
        }
        (MlpGrad { dw, db }, grad)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}

/// AdamW hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Per-tensor Adam moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// One AdamW step with decoupled weight decay. `lr = 0` leaves the
    /// parameters bitwise untouched (moments still advance).
    pub fn step(&mut self, hp: &AdamParams, p: &mut [f64], g: &[f64]) {
        debug_assert_eq!(p.len(), g.len());
        debug_assert_eq!(p.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - hp.beta1.powi(self.t as i32);
        let bc2 = 1.0 - hp.beta2.powi(self.t as i32);
        for i in 0..p.len() {
            self.m[i] = hp.beta1 * self.m[i] + (1.0 - hp.beta1) * g[i];
            self.v[i] = hp.beta2 * self.v[i] + (1.0 - hp.beta2) * g[i] * g[i];
            if hp.lr != 0.0 {
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                p[i] -= hp.lr * (m_hat / (v_hat.sqrt() + hp.eps) + hp.weight_decay * p[i]);
            }
        }
    }
}

/// Normalize each row to unit L2 norm in place; returns the original norms
/// (clamped away from zero) for the backward pass.
pub fn l2_normalize_rows(x: &mut [f64], n: usize, d: usize) -> Vec<f64> {
    let mut norms = Vec::with_capacity(n);
    for r in 0..n {
        let row = &mut x[r * d..(r + 1) * d];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in row.iter_mut() {
            *v /= norm;
        }
        norms.push(norm);
    }
    norms
}

/// Gradient through row normalization: given unit rows y, their pre-norm
/// lengths, and dL/dy, produce dL/dx where y = x / |x|.
pub fn l2_normalize_backward(y: &[f64], norms: &[f64], dy: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    for r in 0..n {
        let yr = &y[r * d..(r + 1) * d];
        let gr = &dy[r * d..(r + 1) * d];
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for j in 0..d {
            dx[r * d + j] = (gr[j] - dot * yr[j]) / norms[r];
        }
    }
    dx
}

pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Central finite difference of `f` w.r.t. one coordinate of `params`.
/// Test helper shared by all gradient checks.
pub fn finite_difference(params: &mut [f64], idx: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = params[idx];
    params[idx] = orig + h;
    let up = f(params);
    params[idx] = orig - h;
    let down = f(params);
    params[idx] = orig;
    (up - down) / (2.0 * h)
}
