//! Backward linear bound propagation through ReLU networks.
//!
//! Unstable neurons (`l < 0 < u`) are bounded above by the chord through
//! `(l, 0)` and `(u, u)` and below by `λ z` with `λ = 1` when `u ≥ |l|`, else 0.
//! Pre-activation bounds of hidden layers are the intersection of interval
//! propagation and the backward bound of that layer.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MlpNetwork;
use crate::geometry::{Interval, Region};
use crate::linalg::Matrix;

/// `lower_a x + lower_b ≤ g(x) ≤ upper_a x + upper_b` for `x ∈ region`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRelaxation {
    pub region: Region,
    pub lower_a: Matrix,
    pub lower_b: Vec<f64>,
    pub upper_a: Matrix,
    pub upper_b: Vec<f64>,
}

impl LinearRelaxation {
    /// Range of the affine bounds over a box, which must lie inside `region`
    /// for the result to enclose the network.
    pub fn eval_on(&self, q: &Region) -> Vec<Interval> {
        (0..self.lower_b.len())
            .map(|r| {
                let lo = concretize(self.lower_a.row(r), self.lower_b[r], q, false);
                let hi = concretize(self.upper_a.row(r), self.upper_b[r], q, true);
                Interval::new(lo, hi.max(lo))
            })
            .collect()
    }
}

/// Axis-aligned box containing `g(q)`: minimize the lower and maximize the
/// upper affine bound by the sign of each coefficient.
pub fn feature_box(relaxation: &LinearRelaxation, q: &Region) -> Vec<Interval> {
    relaxation.eval_on(q)
}

fn concretize(a: &[f64], b: f64, q: &Region, upper: bool) -> f64 {
    let mut acc = b;
    for ((&c, &lo), &hi) in a.iter().zip(&q.lo).zip(&q.hi) {
        let pick_hi = (c >= 0.0) == upper;
        acc += c * if pick_hi { hi } else { lo };
    }
    acc
}

/// Relative outward margin absorbing floating-point error of the propagation.
const MARGIN: f64 = 1e-10;

fn magnitude(a: &[f64], b: f64, q: &Region) -> f64 {
    let mut acc = 1.0 + b.abs();
    for ((&c, &lo), &hi) in a.iter().zip(&q.lo).zip(&q.hi) {
        acc += c.abs() * lo.abs().max(hi.abs());
    }
    acc
}

#[derive(Clone, Copy)]
struct ReluRelax {
    up_slope: f64,
    up_icpt: f64,
    lo_slope: f64,
}

impl ReluRelax {
    fn of(b: Interval) -> Self {
        if b.lo >= 0.0 {
            ReluRelax { up_slope: 1.0, up_icpt: 0.0, lo_slope: 1.0 }
        } else if b.hi <= 0.0 {
            ReluRelax { up_slope: 0.0, up_icpt: 0.0, lo_slope: 0.0 }
        } else {
            let s = b.hi / (b.hi - b.lo);
            let lam = if b.hi >= -b.lo { 1.0 } else { 0.0 };
            ReluRelax { up_slope: s, up_icpt: -s * b.lo, lo_slope: lam }
        }
    }
}

/// Backward pass from the output of layer `top`. Returns `(Λ, c)` with
/// `Λ x + c` bounding it from above (`upper`) or below over the box whose
/// hidden bounds produced `relus`.
fn backward(net: &MlpNetwork, top: usize, relus: &[Vec<ReluRelax>], upper: bool) -> (Matrix, Vec<f64>) {
    let layers = net.layers();
    let mut lam = layers[top].weights.clone();
    let mut c = layers[top].bias.clone();
    for k in (0..top).rev() {
        for r in 0..lam.rows() {
            let row = lam.row_mut(r);
            for (i, coef) in row.iter_mut().enumerate() {
                let rr = relus[k][i];
                if (*coef >= 0.0) == upper {
                    c[r] += *coef * rr.up_icpt;
                    *coef *= rr.up_slope;
                } else {
                    *coef *= rr.lo_slope;
                }
            }
            c[r] += crate::linalg::dot(row, &layers[k].bias);
        }
        lam = lam.matmul(&layers[k].weights);
    }
    (lam, c)
}

fn interval_affine(net: &MlpNetwork, k: usize, input: &[Interval]) -> Vec<Interval> {
    let l = &net.layers()[k];
    (0..l.out_dim())
        .map(|r| {
            let mut acc = Interval::point(l.bias[r]);
            for (&w, iv) in l.weights.row(r).iter().zip(input) {
                acc = acc.add(&iv.scale(w));
            }
            acc
        })
        .collect()
}

/// Sound affine bounds of `net` over the box `q`.
pub fn relax(net: &MlpNetwork, q: &Region) -> LinearRelaxation {
    let nl = net.layers().len();
    let mut relus: Vec<Vec<ReluRelax>> = Vec::with_capacity(nl - 1);
    let mut ibp: Vec<Interval> = q.intervals();
    for k in 0..nl - 1 {
        let mut pre = interval_affine(net, k, &ibp);
        if k > 0 {
            let (la, lc) = backward(net, k, &relus, false);
            let (ua, uc) = backward(net, k, &relus, true);
            for (r, iv) in pre.iter_mut().enumerate() {
                let lo = concretize(la.row(r), lc[r], q, false);
                let hi = concretize(ua.row(r), uc[r], q, true);
                let crown = Interval::new(lo, hi);
                let cut = iv.intersect(&crown);
                if cut.lo <= cut.hi {
                    *iv = cut;
                }
            }
        }
        for iv in pre.iter_mut() {
            *iv = iv.widen(MARGIN * (1.0 + iv.lo.abs().max(iv.hi.abs())));
        }
        relus.push(pre.iter().map(|&b| ReluRelax::of(b)).collect());
        ibp = pre.iter().map(|b| Interval::new(b.lo.max(0.0), b.hi.max(0.0))).collect();
    }
    let (lower_a, mut lower_b) = backward(net, nl - 1, &relus, false);
    let (upper_a, mut upper_b) = backward(net, nl - 1, &relus, true);
    for r in 0..lower_b.len() {
        lower_b[r] -= MARGIN * magnitude(lower_a.row(r), lower_b[r], q);
        upper_b[r] += MARGIN * magnitude(upper_a.row(r), upper_b[r], q);
    }
    LinearRelaxation { region: q.clone(), lower_a, lower_b, upper_a, upper_b }
}
