//! Sound enclosures of the GP posterior mean and variance over boxes.
//!
//! Two bounds are intersected on every sub-box of a uniform subdivision:
//!
//! * per-training-point interval arithmetic: `k(z, zᵢ)` over a box is bracketed
//!   by the kernel at the largest and smallest point-to-box distance; the mean
//!   combines these with the signs of `α`, the variance runs the triangular
//!   solve in interval arithmetic;
//! * a centered bound from the reproducing-kernel geometry:
//!   `|m(z) − m(c)| ≤ ‖m‖_H · √(2(σ_s − k(z, c)))` and
//!   `|s(z) − s(c)| ≤ √(2(σ_s − k(z, c)))` for the posterior standard deviation.
//!
//! For one-dimensional inputs with the unsquared-distance kernel the posterior
//! is, between consecutive training inputs, `A e^{z/L} + B e^{−z/L}` (mean) and
//! the same form with doubled rates (variance), so the ranges are computed
//! exactly from endpoints and the single stationary point of each gap.

use alloc::vec;
use alloc::vec::Vec;

use super::{DistanceForm, GpPosterior};
use crate::geometry::{Interval, Region};
use crate::math;

#[derive(Clone, Debug)]
pub struct RangeBounder {
    rkhs_norm: f64,
    mean_eps: f64,
    subdivisions: usize,
    exact: Option<Exact1d>,
}

impl RangeBounder {
    pub(super) fn placeholder() -> Self {
        RangeBounder { rkhs_norm: 0.0, mean_eps: 0.0, subdivisions: 1, exact: None }
    }

    pub(super) fn new(gp: &GpPosterior) -> Self {
        let p = gp.params();
        let alpha = gp.alpha();
        // ‖m‖²_H = αᵀKα = αᵀy − (σ² + jitter)‖α‖²
        let norm_sq = super::dot(alpha, gp.targets()) - gp.effective_noise() * super::dot(alpha, alpha);
        let sum_abs: f64 = alpha.iter().map(|a| a.abs()).sum();
        let d = gp.input_dim();
        let subdivisions = match d {
            1 => 32,
            2 => 6,
            3 => 3,
            _ => 2,
        };
        let exact = (d == 1 && p.form == DistanceForm::Unsquared).then(|| Exact1d::new(gp));
        RangeBounder {
            rkhs_norm: math::sqrt(norm_sq.max(0.0)) * (1.0 + 1e-9) + 1e-12,
            mean_eps: 1e-10 * (1.0 + sum_abs * p.output_scale),
            subdivisions,
            exact,
        }
    }

    /// RKHS norm of the posterior mean (with a small outward margin).
    pub fn rkhs_norm(&self) -> f64 {
        self.rkhs_norm
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn ranges(&self, gp: &GpPosterior, b: &[Interval]) -> (Interval, Interval) {
        match &self.exact {
            Some(e) => e.ranges(gp, b[0], self.mean_eps),
            None => self.subdivided(gp, b, self.subdivisions),
        }
    }

    /// Generic bound with `k` sub-intervals per dimension.
    pub fn subdivided(&self, gp: &GpPosterior, b: &[Interval], k: usize) -> (Interval, Interval) {
        let d = b.len();
        let k = k.max(1);
        let total = k.pow(d as u32);
        let mut mean = Interval::new(f64::INFINITY, f64::NEG_INFINITY);
        let mut var = mean;
        let mut sub = vec![Interval::point(0.0); d];
        for idx in 0..total {
            let mut rem = idx;
            for (j, s) in sub.iter_mut().enumerate() {
                let part = rem % k;
                rem /= k;
                let w = b[j].width() / k as f64;
                let lo = b[j].lo + w * part as f64;
                let hi = if part + 1 == k { b[j].hi } else { lo + w };
                *s = Interval::new(lo, hi);
            }
            let (m, v) = self.box_bound(gp, &sub);
            mean = mean.hull(&m);
            var = var.hull(&v);
        }
        (mean, var)
    }

    fn box_bound(&self, gp: &GpPosterior, sub: &[Interval]) -> (Interval, Interval) {
        let p = gp.params();
        let s2 = p.output_scale;
        let center: Vec<f64> = sub.iter().map(Interval::mid).collect();
        let (mc, vc) = gp.predict(&center);
        let r2: f64 = sub.iter().map(|i| 0.25 * i.width() * i.width()).sum();
        let delta = math::sqrt((2.0 * (s2 - p.profile(r2))).max(0.0));

        let mean_c = Interval::point(mc).widen(self.rkhs_norm * delta + self.mean_eps);
        let ev = 1e-9 * s2;
        let sd_hi = math::sqrt(vc + ev) + delta;
        let sd_lo = (math::sqrt((vc - ev).max(0.0)) - delta).max(0.0);
        let var_c = Interval::new(sd_lo * sd_lo, (sd_hi * sd_hi).min(s2));

        let region = Region::from_intervals(sub);
        let m = gp.len();
        let mut kbox = Vec::with_capacity(m);
        let mut mean_i = Interval::point(0.0);
        for i in 0..m {
            let z = gp.inputs().row(i);
            let kmin = p.profile(region.max_dist_sq(z));
            let kmax = p.profile(region.min_dist_sq(z));
            let kk = Interval::new(kmin, kmax);
            mean_i = mean_i.add(&kk.scale(gp.alpha()[i]));
            kbox.push(kk);
        }
        let mean_i = mean_i.widen(self.mean_eps);
        let var_i = interval_variance(gp, &kbox);

        (mean_c.intersect(&mean_i), var_c.intersect(&var_i))
    }
}

/// `σ_s − ‖L⁻¹k‖²` over a box of kernel vectors, by interval forward
/// substitution.
fn interval_variance(gp: &GpPosterior, kbox: &[Interval]) -> Interval {
    let s2 = gp.params().output_scale;
    let l = gp.cholesky().factor_matrix();
    let m = kbox.len();
    let mut v: Vec<Interval> = Vec::with_capacity(m);
    let (mut qlo, mut qhi) = (0.0, 0.0);
    for i in 0..m {
        let row = l.row(i);
        let mut acc = kbox[i];
        for (j, vj) in v.iter().enumerate() {
            acc = acc.add(&vj.scale(-row[j]));
        }
        let vi = acc.scale(1.0 / row[i]);
        let mig = if vi.lo > 0.0 {
            vi.lo
        } else if vi.hi < 0.0 {
            -vi.hi
        } else {
            0.0
        };
        let mag = vi.lo.abs().max(vi.hi.abs());
        qlo += mig * mig;
        qhi += mag * mag;
        v.push(vi);
    }
    let eps = 1e-9 * s2;
    Interval::new((s2 - qhi - eps).max(0.0), (s2 - qlo + eps).min(s2))
}

/// Gap-wise closed form for 1-D inputs and `k = σ_s e^{−|z − z'|/L}`.
#[derive(Clone, Debug)]
struct Exact1d {
    decay: f64,
    sorted: Vec<f64>,
    gaps: Vec<Gap>,
    var_eps: f64,
}

#[derive(Clone, Debug)]
struct Gap {
    left: f64,
    right: f64,
    // mean(z) = a·E_r(z) + b·E_l(z)
    a: f64,
    b: f64,
    // ‖L⁻¹k(z)‖² = qa·E_r² + 2·qb·E_r·E_l + qc·E_l²
    qa: f64,
    qb: f64,
    qc: f64,
}

impl Gap {
    #[inline]
    fn e_right(&self, z: f64, decay: f64) -> f64 {
        if self.right.is_finite() {
            math::exp(-(self.right - z) / decay)
        } else {
            0.0
        }
    }

    #[inline]
    fn e_left(&self, z: f64, decay: f64) -> f64 {
        if self.left.is_finite() {
            math::exp(-(z - self.left) / decay)
        } else {
            0.0
        }
    }

    fn eval(&self, z: f64, decay: f64) -> (f64, f64) {
        let (er, el) = (self.e_right(z, decay), self.e_left(z, decay));
        (self.a * er + self.b * el, self.qa * er * er + 2.0 * self.qb * er * el + self.qc * el * el)
    }
}

impl Exact1d {
    fn new(gp: &GpPosterior) -> Self {
        let p = gp.params();
        let decay = 2.0 * p.length_scale * p.length_scale;
        let s2 = p.output_scale;
        let m = gp.len();
        let z: Vec<f64> = (0..m).map(|i| gp.inputs()[(i, 0)]).collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| z[i].total_cmp(&z[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| z[i]).collect();
        let alpha = gp.alpha();

        let mut gaps = Vec::with_capacity(m + 1);
        let mut u = vec![0.0; m];
        let mut v = vec![0.0; m];
        let mut qmax: f64 = 0.0;
        for g in 0..=m {
            let left = if g > 0 { sorted[g - 1] } else { f64::NEG_INFINITY };
            let right = if g < m { sorted[g] } else { f64::INFINITY };
            u.iter_mut().for_each(|x| *x = 0.0);
            v.iter_mut().for_each(|x| *x = 0.0);
            let (mut a, mut b) = (0.0, 0.0);
            for (rank, &i) in order.iter().enumerate() {
                if rank >= g {
                    let k = s2 * math::exp(-(z[i] - right) / decay);
                    u[i] = k;
                    a += alpha[i] * k;
                } else {
                    let k = s2 * math::exp(-(left - z[i]) / decay);
                    v[i] = k;
                    b += alpha[i] * k;
                }
            }
            gp.cholesky().solve_lower_in_place(&mut u);
            gp.cholesky().solve_lower_in_place(&mut v);
            let (qa, qb, qc) = (super::dot(&u, &u), super::dot(&u, &v), super::dot(&v, &v));
            qmax = qmax.max(qa + 2.0 * qb.abs() + qc);
            gaps.push(Gap { left, right, a, b, qa, qb, qc });
        }
        Exact1d { decay, sorted, gaps, var_eps: 1e-10 * (s2 + qmax) }
    }

    fn ranges(&self, gp: &GpPosterior, iv: Interval, mean_eps: f64) -> (Interval, Interval) {
        let s2 = gp.params().output_scale;
        let decay = self.decay;
        let first = self.sorted.partition_point(|&z| z < iv.lo);
        let (mut mlo, mut mhi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut qlo, mut qhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for gap in &self.gaps[first..] {
            if gap.left > iv.hi {
                break;
            }
            let lo = iv.lo.max(gap.left);
            let hi = iv.hi.min(gap.right);
            let mut cands = [lo, hi, f64::NAN, f64::NAN];
            if gap.left.is_finite() && gap.right.is_finite() {
                let mid = 0.5 * (gap.left + gap.right);
                if gap.a != 0.0 && gap.b / gap.a > 0.0 {
                    cands[2] = mid + 0.5 * decay * math::ln(gap.b / gap.a);
                }
                if gap.qa > 0.0 && gap.qc > 0.0 {
                    cands[3] = mid + 0.25 * decay * math::ln(gap.qc / gap.qa);
                }
            }
            for &c in &cands {
                if !(c >= lo && c <= hi) {
                    continue;
                }
                let (mv, qv) = gap.eval(c, decay);
                mlo = mlo.min(mv);
                mhi = mhi.max(mv);
                qlo = qlo.min(qv);
                qhi = qhi.max(qv);
            }
        }
        let mean = Interval::new(mlo, mhi).widen(mean_eps);
        let var = Interval::new((s2 - qhi - self.var_eps).max(0.0), (s2 - qlo + self.var_eps).min(s2));
        (mean, var)
    }
}
