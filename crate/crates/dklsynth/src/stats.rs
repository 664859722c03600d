//! Exact binomial confidence intervals.

use statrs::distribution::{Beta, ContinuousCDF};

/// Two-sided Clopper-Pearson interval for `k` successes in `n` trials at
/// the given confidence level.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n, "need 0 <= k <= n and n > 0");
    assert!(confidence > 0.0 && confidence < 1.0);
    let alpha = 1.0 - confidence;
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 { 0.0 } else { Beta::new(kf, nf - kf + 1.0).expect("valid shape").inverse_cdf(alpha / 2.0) };
    let hi = if k == n { 1.0 } else { Beta::new(kf + 1.0, nf - kf).expect("valid shape").inverse_cdf(1.0 - alpha / 2.0) };
    (lo, hi)
}
