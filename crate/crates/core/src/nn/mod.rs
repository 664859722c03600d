//! Fully connected ReLU networks: forward pass, mini-batch training and
//! sound linear relaxations over boxes.

mod relax;

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use relax::{feature_box, relax, LinearRelaxation};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;

/// One affine layer `W x + b` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn zeros_like(&self) -> Dense {
        Dense { weights: Matrix::zeros(self.out_dim(), self.in_dim()), bias: vec![0.0; self.out_dim()] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (i, &b) in self.bias.iter().enumerate() {
            out.push(b + crate::linalg::dot(self.weights.row(i), x));
        }
    }
}

/// ReLU on every hidden layer, identity on the output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    layers: Vec<Dense>,
}

impl MlpNetwork {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Dimension { expected: l.out_dim(), got: l.bias.len() });
            }
            if k > 0 && layers[k - 1].out_dim() != l.in_dim() {
                return Err(Error::Dimension { expected: layers[k - 1].out_dim(), got: l.in_dim() });
            }
            if l.weights.as_slice().iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite network parameter".into()));
            }
        }
        Ok(MlpNetwork { layers })
    }

    /// Layer sizes `[in, h₁, …, out]` with uniform weights in `±√(6 / fan_in)`
    /// and zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive, at least input and output".into()));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = math::sqrt(6.0 / w[0] as f64);
                Dense {
                    weights: Matrix::from_fn(w[1], w[0], |_, _| limit * (2.0 * rng.random::<f64>() - 1.0)),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        MlpNetwork::new(layers)
    }

    /// Single affine layer computing `x`.
    pub fn identity(n: usize) -> Self {
        MlpNetwork { layers: vec![Dense { weights: Matrix::identity(n), bias: vec![0.0; n] }] }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            l.apply(&cur, &mut next);
            if k < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            core::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Rewrites the first layer so that the network applied to raw `x`
    /// equals the old network applied to `(x − shift) / scale`.
    pub fn fold_input_affine(&mut self, shift: &[f64], scale: &[f64]) {
        let l = &mut self.layers[0];
        for i in 0..l.out_dim() {
            let row = l.weights.row_mut(i);
            let mut db = 0.0;
            for j in 0..row.len() {
                row[j] /= scale[j];
                db += row[j] * shift[j];
            }
            l.bias[i] -= db;
        }
    }

    /// Rewrites the last layer so that outputs become `scale · y + shift`.
    pub fn fold_output_affine(&mut self, shift: &[f64], scale: &[f64]) {
        let k = self.layers.len() - 1;
        let l = &mut self.layers[k];
        for i in 0..l.out_dim() {
            l.weights.row_mut(i).iter_mut().for_each(|w| *w *= scale[i]);
            l.bias[i] = scale[i] * l.bias[i] + shift[i];
        }
    }

    /// Mean squared error `1/(N s) Σ ‖g(x) − y‖²` and its gradient, one
    /// [`Dense`] per layer.
    pub fn mse_and_gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> (f64, Vec<Dense>) {
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let idx: Vec<usize> = (0..inputs.len()).collect();
        let mut ws = Workspace::default();
        let sse = self.accumulate(&idx, inputs, targets, &mut grads, &mut ws);
        let denom = (inputs.len() * self.out_dim()) as f64;
        for g in &mut grads {
            g.weights.as_mut_slice().iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v /= denom);
        }
        (sse / denom, grads)
    }

    pub fn mse(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
        let sse: f64 = inputs
            .iter()
            .zip(targets)
            .map(|(x, y)| self.forward(x).iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>())
            .sum();
        sse / (inputs.len() * self.out_dim()) as f64
    }

    /// Adds `∂/∂θ Σ_{i∈idx} ‖g(xᵢ) − yᵢ‖²` into `grads`; returns the sum.
    fn accumulate(&self, idx: &[usize], inputs: &[Vec<f64>], targets: &[Vec<f64>], grads: &mut [Dense], ws: &mut Workspace) -> f64 {
        let nl = self.layers.len();
        ws.acts.resize(nl + 1, Vec::new());
        let mut sse = 0.0;
        for &i in idx {
            ws.acts[0].clear();
            ws.acts[0].extend_from_slice(&inputs[i]);
            for k in 0..nl {
                let (head, tail) = ws.acts.split_at_mut(k + 1);
                self.layers[k].apply(&head[k], &mut tail[0]);
                if k + 1 < nl {
                    tail[0].iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            ws.delta.clear();
            for (p, t) in ws.acts[nl].iter().zip(&targets[i]) {
                let e = p - t;
                sse += e * e;
                ws.delta.push(2.0 * e);
            }
            for k in (0..nl).rev() {
                let layer = &self.layers[k];
                let g = &mut grads[k];
                let input = &ws.acts[k];
                for (r, &d) in ws.delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[r] += d;
                    for (gw, &x) in g.weights.row_mut(r).iter_mut().zip(input) {
                        *gw += d * x;
                    }
                }
                if k == 0 {
                    break;
                }
                ws.back.clear();
                ws.back.resize(layer.in_dim(), 0.0);
                for (r, &d) in ws.delta.iter().enumerate() {
                    if d != 0.0 {
                        for (b, &w) in ws.back.iter_mut().zip(layer.weights.row(r)) {
                            *b += d * w;
                        }
                    }
                }
                // ReLU derivative of the previous layer's output
                for (b, &a) in ws.back.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *b = 0.0;
                    }
                }
                core::mem::swap(&mut ws.delta, &mut ws.back);
            }
        }
        sse
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }
}

#[derive(Default)]
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

fn flat(layers: &[Dense]) -> impl Iterator<Item = &f64> {
    layers.iter().flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
}

/// Mini-batch Adam settings. The learning rate at epoch `e` is `lr · lr_decay^e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 32, epochs: 200, lr: 2e-3, lr_decay: 0.99 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainReport {
    pub initial_mse: f64,
    pub final_mse: f64,
    /// Epoch whose parameters were kept (0 = the initial parameters).
    pub best_epoch: usize,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Trains `net` in place on the squared error and keeps the parameters with
/// the lowest full-data MSE seen at epoch boundaries, so the final MSE never
/// exceeds the initial one.
pub fn train<R: Rng + ?Sized>(
    net: &mut MlpNetwork,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    if inputs.len() != targets.len() {
        return Err(Error::Dimension { expected: inputs.len(), got: targets.len() });
    }
    if cfg.batch_size == 0 || inputs.len() < cfg.batch_size {
        return Err(Error::InvalidArgument("need at least batch_size training points".into()));
    }
    if inputs.iter().any(|x| x.len() != net.in_dim()) || targets.iter().any(|y| y.len() != net.out_dim()) {
        return Err(Error::Dimension { expected: net.in_dim(), got: inputs[0].len() });
    }
    let initial = net.mse(inputs, targets);
    if !initial.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    let mut best = (net.clone(), initial, 0);
    let mut grads: Vec<Dense> = net.layers.iter().map(Dense::zeros_like).collect();
    let count = flat(&grads).count();
    let mut m1 = vec![0.0; count];
    let mut m2 = vec![0.0; count];
    let mut t = 0i32;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut ws = Workspace::default();
    let mut lr = cfg.lr;
    let s = net.out_dim() as f64;
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| {
                g.weights.as_mut_slice().iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v = 0.0)
            });
            net.accumulate(batch, inputs, targets, &mut grads, &mut ws);
            let denom = batch.len() as f64 * s;
            t += 1;
            let c1 = 1.0 - math::powi(ADAM_B1, t);
            let c2 = 1.0 - math::powi(ADAM_B2, t);
            for (((p, g), a), b) in net.params_mut().zip(flat(&grads)).zip(m1.iter_mut()).zip(m2.iter_mut()) {
                let g = g / denom;
                *a = ADAM_B1 * *a + (1.0 - ADAM_B1) * g;
                *b = ADAM_B2 * *b + (1.0 - ADAM_B2) * g * g;
                *p -= lr * (*a / c1) / (math::sqrt(*b / c2) + ADAM_EPS);
            }
        }
        lr *= cfg.lr_decay;
        let loss = net.mse(inputs, targets);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if loss < best.1 {
            best = (net.clone(), loss, epoch);
        }
    }
    *net = best.0;
    Ok(TrainReport { initial_mse: initial, final_mse: best.1, best_epoch: best.2 })
}
