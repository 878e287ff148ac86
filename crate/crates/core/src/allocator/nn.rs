use rand::Rng;
use serde::{Deserialize, Serialize};

/// One tanh hidden layer followed by a linear output layer, parameters in
/// one flat vector: `w1 [hidden x in]`, `b1`, `w2 [out x hidden]`, `b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct Trace {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng>(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut R) -> Mlp {
        let mut params = vec![0.0; n_hidden * n_in + n_hidden + n_out * n_hidden + n_out];
        let a1 = (6.0 / (n_in + n_hidden) as f64).sqrt();
        for w in &mut params[..n_hidden * n_in] {
            *w = rng.random_range(-a1..a1);
        }
        let a2 = (6.0 / (n_hidden + n_out) as f64).sqrt();
        let off = n_hidden * n_in + n_hidden;
        for w in &mut params[off..off + n_out * n_hidden] {
            *w = rng.random_range(-a2..a2);
        }
        Mlp { n_in, n_hidden, n_out, params }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.n_hidden * self.n_in;
        let w2 = b1 + self.n_hidden;
        let b2 = w2 + self.n_out * self.n_hidden;
        (b1, w2, b2)
    }

    pub fn forward(&self, x: &[f64]) -> Trace {
        debug_assert_eq!(x.len(), self.n_in);
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let hidden: Vec<f64> = p[..b1]
            .chunks_exact(self.n_in)
            .zip(&p[b1..w2])
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).tanh())
            .collect();
        let output = p[w2..b2]
            .chunks_exact(self.n_hidden)
            .zip(&p[b2..])
            .map(|(row, b)| row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        Trace { hidden, output }
    }

    /// Adds `d(loss)/d(params)` into `grad`.
    pub fn backward(&self, x: &[f64], trace: &Trace, d_out: &[f64], grad: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut d_hidden = vec![0.0; self.n_hidden];
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[b2 + o] += g;
            let base = w2 + o * self.n_hidden;
            let rows = grad[base..base + self.n_hidden].iter_mut().zip(&p[base..base + self.n_hidden]);
            for ((gr, w), (dh, hv)) in rows.zip(d_hidden.iter_mut().zip(&trace.hidden)) {
                *gr += g * hv;
                *dh += g * w;
            }
        }
        let (g_w1, rest) = grad.split_at_mut(b1);
        for ((g_row, g_b), (dh, hv)) in g_w1
            .chunks_exact_mut(self.n_in)
            .zip(&mut rest[..self.n_hidden])
            .zip(d_hidden.iter().zip(&trace.hidden))
        {
            let dz = dh * (1.0 - hv * hv);
            if dz == 0.0 {
                continue;
            }
            *g_b += dz;
            for (gr, xv) in g_row.iter_mut().zip(x) {
                *gr += dz * xv;
            }
        }
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}
