//! Small tanh MLPs with hand-written backprop and an Adam optimizer.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as
//! its weight matrix (row-major, `out x in`) followed by its bias. The input
//! layer is sparse: callers pass the indices of the inputs that are 1.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of every layer for one input; the last entry is the output.
pub type Trace = Vec<Vec<f64>>;

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp { sizes: sizes.to_vec(), params: vec![0.0; n] }
    }

    /// Orthogonal weights, zero biases. `head_gain` scales the last layer,
    /// hidden layers use gain sqrt(2).
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], head_gain: f64, rng: &mut R) -> Self {
        let mut net = Mlp::zeros(sizes);
        let layers = sizes.len() - 1;
        for k in 0..layers {
            let (inp, out) = (sizes[k], sizes[k + 1]);
            let gain = if k + 1 == layers { head_gain } else { 2f64.sqrt() };
            let q = orthogonal_matrix(out, inp, rng);
            let off = net.offset(k);
            for j in 0..out {
                for i in 0..inp {
                    net.params[off + j * inp + i] = gain * q[(j, i)];
                }
            }
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn offset(&self, layer: usize) -> usize {
        self.sizes[..layer + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn forward(&self, active: &[usize]) -> Trace {
        let layers = self.sizes.len() - 1;
        let mut trace: Trace = Vec::with_capacity(layers);
        for k in 0..layers {
            let (inp, out) = (self.sizes[k], self.sizes[k + 1]);
            let off = self.offset(k);
            let (w, b) = self.params[off..off + inp * out + out].split_at(inp * out);
            let mut z = b.to_vec();
            if k == 0 {
                for (j, zj) in z.iter_mut().enumerate() {
                    let row = &w[j * inp..];
                    *zj += active.iter().map(|&i| row[i]).sum::<f64>();
                }
            } else {
                let a = &trace[k - 1];
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += w[j * inp..(j + 1) * inp].iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            if k + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            trace.push(z);
        }
        trace
    }

    pub fn output(&self, active: &[usize]) -> Vec<f64> {
        self.forward(active).pop().unwrap()
    }

    /// Adds d(loss)/d(params) into `grad` given d(loss)/d(output).
    pub fn backward(&self, active: &[usize], trace: &Trace, dout: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut delta = dout.to_vec();
        for k in (0..layers).rev() {
            let (inp, out) = (self.sizes[k], self.sizes[k + 1]);
            let off = self.offset(k);
            let (gw, gb) = grad[off..off + inp * out + out].split_at_mut(inp * out);
            for (g, d) in gb.iter_mut().zip(&delta) {
                *g += d;
            }
            if k == 0 {
                for (j, &d) in delta.iter().enumerate() {
                    for &i in active {
                        gw[j * inp + i] += d;
                    }
                }
                break;
            }
            let a = &trace[k - 1];
            let w = &self.params[off..off + inp * out];
            let mut prev = vec![0.0; inp];
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = j * inp;
                for i in 0..inp {
                    gw[row + i] += d * a[i];
                    prev[i] += w[row + i] * d;
                }
            }
            for (p, ai) in prev.iter_mut().zip(a) {
                *p *= 1.0 - ai * ai;
            }
            delta = prev;
        }
    }
}

fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..short {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

/// Adam state over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-5, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut i = 0;
        for block in params.iter_mut() {
            for p in block.iter_mut() {
                let g = grad[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
                i += 1;
            }
        }
    }
}

/// Scales `grad` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}
