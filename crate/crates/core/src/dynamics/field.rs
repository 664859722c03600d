//! Vector fields `f(x, a)`.

use alloc::vec::Vec;
use core::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::math;

/// Deterministic part of the one-step dynamics.
pub trait VectorField: Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Writes `f(x, action)` into `out`. `action < num_actions()` is checked by callers.
    fn eval(&self, x: &[f64], action: usize, out: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Identity,
    Sin,
    Cos,
    Exp,
    Square,
}

/// `func(Σ w·x[var] + offset)`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub func: Func,
    pub lin: Vec<(usize, f64)>,
    #[serde(default)]
    pub offset: f64,
}

impl Factor {
    pub fn of(func: Func, var: usize) -> Self {
        Factor { func, lin: alloc::vec![(var, 1.0)], offset: 0.0 }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let arg = self.lin.iter().map(|&(k, w)| w * x[k]).sum::<f64>() + self.offset;
        match self.func {
            Func::Identity => arg,
            Func::Sin => math::sin(arg),
            Func::Cos => math::cos(arg),
            Func::Exp => math::exp(arg),
            Func::Square => arg * arg,
        }
    }
}

/// `coef · Π factors` (an empty product is 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    #[serde(default)]
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn constant(coef: f64) -> Self {
        Term { coef, factors: Vec::new() }
    }

    pub fn linear(coef: f64, var: usize) -> Self {
        Term { coef, factors: alloc::vec![Factor::of(Func::Identity, var)] }
    }

    pub fn of(coef: f64, factors: Vec<Factor>) -> Self {
        Term { coef, factors }
    }
}

/// A vector field given as a sum of product terms per action and output
/// coordinate: `f_j(x, a) = Σ_t coef_t Π_k func_k(lin_k · x + offset_k)`.
/// This is the file format used for user-supplied dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermField {
    pub dim: usize,
    /// Indexed `[action][output coordinate]`.
    pub actions: Vec<Vec<Vec<Term>>>,
}

impl TermField {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.actions.is_empty() {
            return Err(Error::InvalidSpec("vector field has no actions".into()));
        }
        for coords in &self.actions {
            if coords.len() != self.dim {
                return Err(Error::Dimension { expected: self.dim, got: coords.len() });
            }
            for t in coords.iter().flatten() {
                for f in &t.factors {
                    if f.lin.iter().any(|&(k, _)| k >= self.dim) {
                        return Err(Error::InvalidSpec("factor references a missing coordinate".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

impl VectorField for TermField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_actions(&self) -> usize {
        self.actions.len()
    }

    fn eval(&self, x: &[f64], action: usize, out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.actions[action]) {
            *o = terms.iter().map(|t| t.coef * t.factors.iter().map(|f| f.eval(x)).product::<f64>()).sum();
        }
    }
}
