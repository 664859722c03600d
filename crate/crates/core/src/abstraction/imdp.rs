//! Interval Markov decision processes with sparse rows.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::LabelSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub dest: usize,
    pub lo: f64,
    pub hi: f64,
}

/// States `0..n` are cells, state `n` is the absorbing unsafe state `q_u`.
/// Destinations missing from a row have the interval `[0, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Imdp {
    num_actions: usize,
    props: Vec<String>,
    labels: Vec<LabelSet>,
    rows: Vec<Vec<Transition>>,
}

/// Slack allowed when checking that a row admits a distribution.
const FEAS_TOL: f64 = 1e-12;
/// Largest total widening applied to repair roundoff in a row.
pub const REPAIR_CAP: f64 = 1e-9;

impl Imdp {
    /// `labels` has one entry per cell (`q_u` excluded); `rows[s * A + a]`
    /// for cell states only. The `q_u` rows are added here.
    pub fn new(num_actions: usize, props: Vec<String>, labels: Vec<LabelSet>, mut rows: Vec<Vec<Transition>>) -> Result<Self> {
        let cells = labels.len();
        if num_actions == 0 || rows.len() != cells * num_actions {
            return Err(Error::Dimension { expected: cells * num_actions, got: rows.len() });
        }
        for _ in 0..num_actions {
            rows.push(vec![Transition { dest: cells, lo: 1.0, hi: 1.0 }]);
        }
        let mut labels = labels;
        labels.push(LabelSet::EMPTY);
        let imdp = Imdp { num_actions, props, labels, rows };
        imdp.validate()?;
        Ok(imdp)
    }

    /// Checks `0 ≤ P̌ ≤ P̂ ≤ 1`, sorted unique destinations and
    /// `Σ P̌ ≤ 1 ≤ Σ P̂` on every row.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_states();
        for (i, row) in self.rows.iter().enumerate() {
            let (s, a) = (i / self.num_actions, i % self.num_actions);
            let mut prev = None;
            let (mut sl, mut sh) = (0.0, 0.0);
            for t in row {
                if t.dest >= n || prev.is_some_and(|p| p >= t.dest) {
                    return Err(Error::InvalidArgument("row destinations must be sorted, unique and in range".into()));
                }
                if !(0.0 <= t.lo && t.lo <= t.hi && t.hi <= 1.0) {
                    return Err(Error::InfeasibleIntervals { state: s, action: a, sum_lo: t.lo, sum_hi: t.hi });
                }
                prev = Some(t.dest);
                sl += t.lo;
                sh += t.hi;
            }
            if sl > 1.0 + FEAS_TOL || sh < 1.0 - FEAS_TOL {
                return Err(Error::InfeasibleIntervals { state: s, action: a, sum_lo: sl, sum_hi: sh });
            }
        }
        let u = self.unsafe_state();
        for a in 0..self.num_actions {
            if self.row(u, a) != [Transition { dest: u, lo: 1.0, hi: 1.0 }] {
                return Err(Error::InvalidArgument("unsafe state must be absorbing".into()));
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn num_cells(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn unsafe_state(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn props(&self) -> &[String] {
        &self.props
    }

    pub fn label(&self, s: usize) -> LabelSet {
        self.labels[s]
    }

    pub fn labels(&self) -> &[LabelSet] {
        &self.labels
    }

    pub fn row(&self, s: usize, a: usize) -> &[Transition] {
        &self.rows[s * self.num_actions + a]
    }

    /// Number of stored `(s, a, s')` entries.
    pub fn num_transitions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Widens a row by at most [`REPAIR_CAP`] so that `Σ P̌ ≤ 1 ≤ Σ P̂` holds
/// exactly; never narrows an interval.
pub fn repair_row(row: &mut [Transition], state: usize, action: usize) -> Result<()> {
    let sum_hi: f64 = row.iter().map(|t| t.hi).sum();
    let sum_lo: f64 = row.iter().map(|t| t.lo).sum();
    let fail = || Error::InfeasibleIntervals { state, action, sum_lo, sum_hi };
    if sum_hi < 1.0 {
        let deficit = 1.0 - sum_hi;
        let room: f64 = row.iter().map(|t| 1.0 - t.hi).sum();
        if deficit > REPAIR_CAP || room < deficit {
            return Err(fail());
        }
        // spread proportionally to the remaining room, with a little extra
        let f = (deficit * (1.0 + 1e-6) / room).min(1.0);
        row.iter_mut().for_each(|t| t.hi = (t.hi + f * (1.0 - t.hi)).min(1.0));
    }
    if sum_lo > 1.0 {
        let excess = sum_lo - 1.0;
        if excess > REPAIR_CAP {
            return Err(fail());
        }
        let f = (excess * (1.0 + 1e-6) / sum_lo).min(1.0);
        row.iter_mut().for_each(|t| t.lo = (t.lo - f * t.lo).max(0.0));
    }
    Ok(())
}
