//! Transition probability bounds for Gaussian one-step kernels with
//! uncertain mean and variance.

use crate::dkl::PosteriorRanges;
use crate::error::{Error, Result};
use crate::geometry::Interval;
use crate::math;

/// Gaussian measure of `θ` under mean `mu` and variance `var`.
pub fn h(theta: Interval, mu: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::NonPositiveVariance(var));
    }
    Ok(h_unchecked(theta, mu, var))
}

#[inline]
fn h_unchecked(theta: Interval, mu: f64, var: f64) -> f64 {
    let s = math::sqrt(2.0 * var);
    let a = (theta.lo - mu) / s;
    let b = (theta.hi - mu) / s;
    // erfc differences keep precision in the tails
    let v = if a >= 0.0 {
        0.5 * (math::erfc(a) - math::erfc(b))
    } else if b <= 0.0 {
        0.5 * (math::erfc(-b) - math::erfc(-a))
    } else {
        0.5 * (math::erf(b) - math::erf(a))
    };
    v.clamp(0.0, 1.0)
}

/// Variance in `[lo, hi]` maximizing the mass of `θ` for a mean at `mu`.
fn best_variance(theta: Interval, mu: f64, lo: f64, hi: f64) -> f64 {
    if theta.contains(mu) {
        return lo;
    }
    let (near, far) = if mu < theta.lo { (theta.lo - mu, theta.hi - mu) } else { (mu - theta.hi, mu - theta.lo) };
    if !far.is_finite() {
        return hi;
    }
    if near <= 0.0 || far <= near {
        return lo;
    }
    let s = (far * far - near * near) / (2.0 * math::ln(far / near));
    s.clamp(lo, hi)
}

/// Per-dimension `(lower, upper)` bound of `h(θ, m, v + noise)` over
/// `m ∈ mean`, `v ∈ var`.
pub fn dim_bounds(theta: Interval, mean: Interval, var: Interval, noise: f64) -> (f64, f64) {
    let (vlo, vhi) = (var.lo.max(0.0) + noise, var.hi.max(0.0) + noise);
    let c = theta.mid();
    let c = if c.is_finite() { c } else if theta.lo.is_finite() { f64::INFINITY } else if theta.hi.is_finite() { f64::NEG_INFINITY } else { 0.0 };
    // lower: mean endpoint farthest from the centre, worst variance endpoint
    let far = if (mean.lo - c).abs() >= (mean.hi - c).abs() { mean.lo } else { mean.hi };
    let lower = h_unchecked(theta, far, vlo).min(h_unchecked(theta, far, vhi));
    // upper: closest mean, best variance in the range
    let near = mean.clamp(c);
    let upper = h_unchecked(theta, near, best_variance(theta, near, vlo, vhi));
    (lower, upper.max(lower))
}

const REL_MARGIN: f64 = 1e-12;
const ABS_MARGIN: f64 = 1e-15;

/// Bounds on `T(q' | x)` over the region the ranges were computed on,
/// assuming independent Gaussian noise per dimension (diagonal covariance).
pub fn transition_bounds(ranges: &PosteriorRanges, noise_var: &[f64], dest: &[Interval]) -> (f64, f64) {
    let mut lo = 1.0;
    let mut hi = 1.0;
    for j in 0..dest.len() {
        let (l, u) = dim_bounds(dest[j], ranges.mean[j], ranges.var[j], noise_var[j]);
        lo *= l;
        hi *= u;
        if hi == 0.0 {
            break;
        }
    }
    let lo = (lo * (1.0 - REL_MARGIN) - ABS_MARGIN).max(0.0);
    let hi = (hi * (1.0 + REL_MARGIN) + ABS_MARGIN).min(1.0);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::erf::erf;

    fn oracle(theta: Interval, mu: f64, var: f64) -> f64 {
        let s = libm::sqrt(2.0 * var);
        0.5 * (erf((theta.hi - mu) / s) - erf((theta.lo - mu) / s))
    }

    #[test]
    fn h_reference_values() {
        assert!((h(Interval::new(-1.0, 1.0), 0.0, 1.0).unwrap() - 0.682_689_492_137_085_9).abs() < 1e-12);
        assert!((h(Interval::ENTIRE, 3.0, 0.2).unwrap() - 1.0).abs() < 1e-12);
        assert!(h(Interval::new(0.0, 1.0), 1e6, 1.0).unwrap() < 1e-300);
        assert!(matches!(h(Interval::new(0.0, 1.0), 0.0, 0.0), Err(Error::NonPositiveVariance(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let lo = rng.random::<f64>() * 6.0 - 3.0;
            let th = Interval::new(lo, lo + rng.random::<f64>() * 2.0);
            let mu = rng.random::<f64>() * 6.0 - 3.0;
            let var = 0.01 + rng.random::<f64>();
            let (x, y) = (h(th, mu, var).unwrap(), oracle(th, mu, var));
            assert!((x - y).abs() < 1e-9, "{x} {y} {th:?} {mu} {var}");
        }
    }

    #[test]
    fn best_variance_is_the_maximizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let th = Interval::new(0.5 + rng.random::<f64>(), 2.0 + rng.random::<f64>());
            let mu = rng.random::<f64>() * 4.0 - 1.0;
            let (lo, hi) = (0.01 + 0.2 * rng.random::<f64>(), 0.3 + 2.0 * rng.random::<f64>());
            let best = h_unchecked(th, mu, best_variance(th, mu, lo, hi));
            for k in 0..=200 {
                let v = lo + (hi - lo) * k as f64 / 200.0;
                assert!(h_unchecked(th, mu, v) <= best + 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_ranges_are_tight() {
        let dest = [Interval::new(0.0, 1.0), Interval::new(-1.0, 0.5)];
        let ranges = PosteriorRanges {
            mean: vec![Interval::point(0.5), Interval::point(-0.25)],
            var: vec![Interval::point(0.02), Interval::point(0.05)],
        };
        let noise = [0.01, 0.02];
        let (lo, hi) = transition_bounds(&ranges, &noise, &dest);
        let exact = h_unchecked(dest[0], 0.5, 0.03) * h_unchecked(dest[1], -0.25, 0.07);
        assert!(lo <= exact && exact <= hi && hi - lo < 3e-12, "{lo} {exact} {hi}");
        assert!((exact - oracle(dest[0], 0.5, 0.03) * oracle(dest[1], -0.25, 0.07)).abs() < 1e-9);
        let whole = [Interval::ENTIRE, Interval::ENTIRE];
        let (lo, hi) = transition_bounds(&ranges, &noise, &whole);
        assert!(lo > 1.0 - 1e-11 && hi == 1.0);
    }

    #[test]
    fn bounds_enclose_every_mean_and_variance_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let mut dest = vec![];
            let mut mean = vec![];
            let mut var = vec![];
            for _ in 0..2 {
                let a = rng.random::<f64>() * 4.0 - 2.0;
                dest.push(Interval::new(a, a + 0.1 + rng.random::<f64>()));
                let m = rng.random::<f64>() * 4.0 - 2.0;
                mean.push(Interval::new(m, m + 0.5 * rng.random::<f64>()));
                let v = 0.2 * rng.random::<f64>();
                var.push(Interval::new(v, v + 0.3 * rng.random::<f64>()));
            }
            let noise = [0.01, 0.005];
            let ranges = PosteriorRanges { mean: mean.clone(), var: var.clone() };
            let (lo, hi) = transition_bounds(&ranges, &noise, &dest);
            for _ in 0..200 {
                let mut p = 1.0;
                for j in 0..2 {
                    let m = mean[j].lo + mean[j].width() * rng.random::<f64>();
                    let v = var[j].lo + var[j].width() * rng.random::<f64>();
                    p *= oracle(dest[j], m, v + noise[j]);
                }
                assert!(lo <= p + 1e-9 && p <= hi + 1e-9, "{lo} {p} {hi}");
            }
        }
    }
}
