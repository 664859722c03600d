//! Stochastic systems `x⁺ = f(x, a) + v`, `v ~ N(0, V)` with diagonal `V`,
//! and transition datasets sampled from them.

mod builtin;
mod field;
mod labels;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use builtin::{builtin_labels, builtin_system, builtin_term_field, BUILTIN_SYSTEMS};
pub use field::{Factor, Func, Term, TermField, VectorField};
pub use labels::{LabelMap, LabelSet, LabeledRegion};

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::math;

#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub name: String,
    pub actions: Vec<String>,
    pub domain: Region,
    /// Diagonal of the noise covariance `V`.
    pub noise_var: Vec<f64>,
    pub field: Arc<dyn VectorField>,
}

impl SystemSpec {
    pub fn new(
        name: impl Into<String>,
        actions: Vec<String>,
        domain: Region,
        noise_var: Vec<f64>,
        field: Arc<dyn VectorField>,
    ) -> Result<Self> {
        let n = domain.dim();
        if n == 0 {
            return Err(Error::InvalidSpec("state dimension must be positive".into()));
        }
        if actions.is_empty() {
            return Err(Error::InvalidSpec("action set is empty".into()));
        }
        if field.dim() != n {
            return Err(Error::Dimension { expected: n, got: field.dim() });
        }
        if field.num_actions() != actions.len() {
            return Err(Error::InvalidSpec("vector field and action list disagree on |U|".into()));
        }
        if noise_var.len() != n {
            return Err(Error::Dimension { expected: n, got: noise_var.len() });
        }
        if noise_var.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidSpec("noise variances must be positive".into()));
        }
        if (0..n).any(|j| !(domain.width(j) > 0.0)) {
            return Err(Error::InvalidSpec("domain must have positive width in every dimension".into()));
        }
        Ok(SystemSpec { name: name.into(), actions, domain, noise_var, field })
    }

    /// Same system with the noise switched off. Only for deterministic checks
    /// of the vector field; the abstraction requires positive noise.
    pub fn noiseless(mut self) -> Self {
        self.noise_var.iter_mut().for_each(|v| *v = 0.0);
        self
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_index(&self, name: &str) -> Result<usize> {
        self.actions.iter().position(|a| a == name).ok_or_else(|| Error::UnknownName(name.into()))
    }

    /// `f(x, a)` without noise.
    pub fn mean_next(&self, x: &[f64], action: usize) -> Result<Vec<f64>> {
        if action >= self.num_actions() {
            return Err(Error::UnknownAction(action));
        }
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        let mut out = vec![0.0; self.dim()];
        self.field.eval(x, action, &mut out);
        Ok(out)
    }

    /// One step of the stochastic system.
    pub fn step<R: Rng + ?Sized>(&self, x: &[f64], action: usize, rng: &mut R) -> Result<Vec<f64>> {
        let mut out = self.mean_next(x, action)?;
        for (o, &v) in out.iter_mut().zip(&self.noise_var) {
            let z: f64 = StandardNormal.sample(rng);
            if v > 0.0 {
                *o += math::sqrt(v) * z;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub action: usize,
    pub state: Vec<f64>,
    pub next: Vec<f64>,
}

/// Transition triples partitioned by action, with the per-action subsets used
/// for posterior prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub num_actions: usize,
    pub samples: Vec<Sample>,
    /// Indices into `samples` per action.
    pub by_action: Vec<Vec<usize>>,
    /// Indices into `samples` per action; a subset of `by_action[a]`.
    pub pred: Vec<Vec<usize>>,
}

impl Dataset {
    /// Rebuilds the per-action index from samples and the given prediction subsets.
    pub fn from_samples(dim: usize, num_actions: usize, samples: Vec<Sample>, pred: Vec<Vec<usize>>) -> Result<Self> {
        let mut by_action = vec![Vec::new(); num_actions];
        for (i, s) in samples.iter().enumerate() {
            if s.action >= num_actions {
                return Err(Error::UnknownAction(s.action));
            }
            if s.state.len() != dim || s.next.len() != dim {
                return Err(Error::Dimension { expected: dim, got: s.state.len().min(s.next.len()) });
            }
            by_action[s.action].push(i);
        }
        if pred.len() != num_actions {
            return Err(Error::Dimension { expected: num_actions, got: pred.len() });
        }
        for (a, p) in pred.iter().enumerate() {
            if p.iter().any(|&i| i >= samples.len() || samples[i].action != a) {
                return Err(Error::InvalidArgument("prediction subset references a foreign sample".into()));
            }
        }
        Ok(Dataset { dim, num_actions, samples, by_action, pred })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(inputs, targets)` over the given sample indices.
    pub fn gather(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        idx.iter().map(|&i| (self.samples[i].state.clone(), self.samples[i].next.clone())).unzip()
    }
}

/// Samples `per_action_count` states uniformly over the domain for every
/// action, steps the system once from each and picks a uniform subset of
/// `pred_count` samples per action for posterior prediction.
pub fn generate_dataset<R: Rng + ?Sized>(
    spec: &SystemSpec,
    per_action_count: usize,
    pred_count: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if pred_count > per_action_count {
        return Err(Error::InvalidArgument("pred_count must not exceed per_action_count".into()));
    }
    let mut samples = Vec::with_capacity(per_action_count * spec.num_actions());
    let mut pred = Vec::with_capacity(spec.num_actions());
    for a in 0..spec.num_actions() {
        let base = samples.len();
        for _ in 0..per_action_count {
            let x = spec.domain.sample(rng);
            let next = spec.step(&x, a, rng)?;
            samples.push(Sample { action: a, state: x, next });
        }
        let mut chosen: Vec<usize> = if pred_count == per_action_count {
            (0..per_action_count).collect()
        } else {
            rand::seq::index::sample(rng, per_action_count, pred_count).into_vec()
        };
        chosen.sort_unstable();
        pred.push(chosen.into_iter().map(|i| base + i).collect());
    }
    Dataset::from_samples(spec.dim(), spec.num_actions(), samples, pred)
}
