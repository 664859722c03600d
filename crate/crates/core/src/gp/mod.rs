//! Gaussian process regression with a squared-exponential-family kernel.
//!
//! The kernel is `k(x, x') = σ_s · exp(−D(x, x') / (2 l²))` where `D` is the
//! Euclidean distance (the default, [`DistanceForm::Unsquared`]) or its square
//! ([`DistanceForm::Squared`]). The prior mean is zero; callers standardize
//! targets.

mod bounds;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use bounds::RangeBounder;

use crate::error::{Error, Result};
use crate::geometry::Interval;
use crate::linalg::{dot, Cholesky, Matrix};
use crate::math;

/// Distance used inside the kernel exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceForm {
    /// `exp(−‖x − x'‖ / 2l²)`
    #[default]
    Unsquared,
    /// `exp(−‖x − x'‖² / 2l²)`
    Squared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeKernelParams {
    pub output_scale: f64,
    pub length_scale: f64,
    pub noise_var: f64,
    #[serde(default)]
    pub form: DistanceForm,
}

impl SeKernelParams {
    pub fn new(output_scale: f64, length_scale: f64, noise_var: f64, form: DistanceForm) -> Result<Self> {
        let p = SeKernelParams { output_scale, length_scale, noise_var, form };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.output_scale) && ok(self.length_scale) && ok(self.noise_var) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("kernel parameters must be positive and finite".into()))
        }
    }

    /// Kernel value as a function of the squared Euclidean distance.
    #[inline]
    pub fn profile(&self, dist_sq: f64) -> f64 {
        self.output_scale * math::exp(-self.exponent_distance(dist_sq) / (2.0 * self.length_scale * self.length_scale))
    }

    #[inline]
    fn exponent_distance(&self, dist_sq: f64) -> f64 {
        match self.form {
            DistanceForm::Unsquared => math::sqrt(dist_sq),
            DistanceForm::Squared => dist_sq,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.profile(dist_sq(x, y))
    }

    fn to_log(self) -> [f64; 3] {
        [math::ln(self.output_scale), math::ln(self.length_scale), math::ln(self.noise_var)]
    }

    fn from_log(t: [f64; 3], form: DistanceForm) -> Self {
        SeKernelParams { output_scale: math::exp(t[0]), length_scale: math::exp(t[1]), noise_var: math::exp(t[2]), form }
    }
}

impl Default for SeKernelParams {
    fn default() -> Self {
        SeKernelParams { output_scale: 1.0, length_scale: 1.0, noise_var: 0.1, form: DistanceForm::Unsquared }
    }
}

#[inline]
pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `k(x, x')`.
pub fn kernel_eval(params: &SeKernelParams, x: &[f64], y: &[f64]) -> f64 {
    params.eval(x, y)
}

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

fn kernel_matrix(params: &SeKernelParams, inputs: &Matrix) -> Matrix {
    let m = inputs.rows();
    let mut k = Matrix::zeros(m, m);
    for i in 0..m {
        k[(i, i)] = params.output_scale;
        for j in 0..i {
            let v = params.eval(inputs.row(i), inputs.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Factors `K + (σ² + jitter) I`, escalating the jitter ×10 from `1e-8 σ_s` to
/// `1e-4 σ_s`. Returns the factor and the jitter that worked.
fn factor_with_jitter(params: &SeKernelParams, k: &Matrix) -> Result<(Cholesky, f64)> {
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * params.output_scale;
        let mut a = k.clone();
        for i in 0..a.rows() {
            a[(i, i)] += params.noise_var + jitter;
        }
        if let Some(c) = Cholesky::factor(&a) {
            return Ok((c, jitter));
        }
        if rel >= JITTER_MAX {
            return Err(Error::Factorization { jitter });
        }
        rel *= 10.0;
    }
}

/// Fitted posterior with cached factorization and weights.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    params: SeKernelParams,
    inputs: Matrix,
    targets: Vec<f64>,
    jitter: f64,
    chol: Cholesky,
    alpha: Vec<f64>,
    bounder: RangeBounder,
}

impl GpPosterior {
    /// Fits the posterior to `inputs` (one row per point) and scalar `targets`.
    pub fn fit(params: SeKernelParams, inputs: Matrix, targets: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if inputs.rows() == 0 || inputs.rows() != targets.len() {
            return Err(Error::Dimension { expected: inputs.rows().max(1), got: targets.len() });
        }
        let k = kernel_matrix(&params, &inputs);
        let (chol, jitter) = factor_with_jitter(&params, &k)?;
        let alpha = chol.solve(&targets);
        let mut gp = GpPosterior { params, inputs, targets, jitter, chol, alpha, bounder: RangeBounder::placeholder() };
        gp.bounder = RangeBounder::new(&gp);
        Ok(gp)
    }

    pub fn params(&self) -> &SeKernelParams {
        &self.params
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Diagonal term actually added to `K`: `σ² + jitter`.
    pub fn effective_noise(&self) -> f64 {
        self.params.noise_var + self.jitter
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn kernel_vector(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.params.eval(x, self.inputs.row(i))).collect()
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        dot(&self.kernel_vector(x), &self.alpha)
    }

    pub fn predict_var(&self, x: &[f64]) -> f64 {
        let mut v = self.kernel_vector(x);
        self.chol.solve_lower_in_place(&mut v);
        (self.params.output_scale - dot(&v, &v)).max(0.0)
    }

    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = self.kernel_vector(x);
        let mean = dot(&k, &self.alpha);
        let mut v = k;
        self.chol.solve_lower_in_place(&mut v);
        (mean, (self.params.output_scale - dot(&v, &v)).max(0.0))
    }

    /// Sound enclosures of the posterior mean and variance over the box `b`
    /// (in the GP's input space).
    pub fn ranges(&self, b: &[Interval]) -> (Interval, Interval) {
        self.bounder.ranges(self, b)
    }

    pub fn bounder(&self) -> &RangeBounder {
        &self.bounder
    }
}

/// Negative log marginal likelihood and its gradient with respect to
/// `(log σ_s, log l, log σ²)`.
pub fn neg_log_marginal_likelihood(params: &SeKernelParams, inputs: &Matrix, targets: &[f64]) -> Result<(f64, [f64; 3])> {
    params.validate()?;
    let m = inputs.rows();
    if m == 0 || m != targets.len() {
        return Err(Error::Dimension { expected: m.max(1), got: targets.len() });
    }
    let k = kernel_matrix(params, inputs);
    let (chol, _) = factor_with_jitter(params, &k)?;
    let alpha = chol.solve(targets);
    let value = 0.5 * dot(targets, &alpha) + 0.5 * chol.log_det() + 0.5 * m as f64 * math::LN_2PI;

    let kinv = chol.inverse();
    let l2 = params.length_scale * params.length_scale;
    let mut grad = [0.0; 3];
    for i in 0..m {
        for j in 0..m {
            let w = kinv[(i, j)] - alpha[i] * alpha[j];
            let kij = k[(i, j)];
            grad[0] += w * kij;
            if i != j {
                let d = params.exponent_distance(dist_sq(inputs.row(i), inputs.row(j)));
                grad[1] += w * kij * d / l2;
            }
        }
        grad[2] += (kinv[(i, i)] - alpha[i] * alpha[i]) * params.noise_var;
    }
    grad.iter_mut().for_each(|g| *g *= 0.5);
    Ok((value, grad))
}

/// Geometric step decay: step `k` uses `initial · decay^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub initial: f64,
    pub decay: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule { initial: 0.2, decay: 0.995 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOutcome {
    pub params: SeKernelParams,
    pub nlml: f64,
    /// Best NLML seen after each iteration, starting with the initial value.
    pub trace: Vec<f64>,
}

const LOG_BOUNDS: [(f64, f64); 3] = [(-9.2, 9.2), (-6.9, 6.9), (-13.8, 4.6)];
const DIVERGENCE_STREAK: usize = 10;

/// Gradient descent on the NLML in log-parameter space; the gradient is
/// divided by the number of points so one step size works across data sizes.
/// Returns the best parameters seen.
pub fn optimize_hyperparams(
    inputs: &Matrix,
    targets: &[f64],
    init: SeKernelParams,
    iters: usize,
    schedule: StepSchedule,
) -> Result<OptimizeOutcome> {
    let (mut cur, mut grad) = neg_log_marginal_likelihood(&init, inputs, targets)?;
    let mut theta = init.to_log();
    let mut best = (init, cur);
    let mut trace = vec![cur];
    let scale = 1.0 / inputs.rows() as f64;
    let mut streak = 0;
    let mut step = schedule.initial;
    for _ in 0..iters {
        for (t, (g, (lo, hi))) in theta.iter_mut().zip(grad.iter().zip(LOG_BOUNDS)) {
            *t = (*t - step * g * scale).clamp(lo, hi);
        }
        step *= schedule.decay;
        let p = SeKernelParams::from_log(theta, init.form);
        match neg_log_marginal_likelihood(&p, inputs, targets) {
            Ok((v, g)) if v.is_finite() => {
                streak = if v > cur { streak + 1 } else { 0 };
                cur = v;
                grad = g;
                if v < best.1 {
                    best = (p, v);
                }
            }
            _ => {
                // unusable point: back off to the best parameters
                streak += 1;
                theta = best.0.to_log();
                grad = neg_log_marginal_likelihood(&best.0, inputs, targets)?.1;
                cur = best.1;
            }
        }
        trace.push(best.1);
        if streak >= DIVERGENCE_STREAK {
            break;
        }
    }
    Ok(OptimizeOutcome { params: best.0, nlml: best.1, trace })
}
