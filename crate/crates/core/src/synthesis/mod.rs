//! Robust strategy synthesis on the product of an IMDP with a DFA.
//!
//! Satisfaction is reachability of accepting product states: a run counts as
//! satisfying once its label trace has an accepted prefix. The unsafe state
//! `q_u` is a rejecting trap. A pessimistic robust value iteration yields the
//! strategy and `p̌`; the same strategy evaluated against an optimistic
//! adversary yields `p̂`.

mod dfa;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use dfa::{Dfa, Translator};

use crate::abstraction::Imdp;
use crate::dynamics::LabelSet;
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_THRESHOLD: f64 = 0.95;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
/// A new action replaces the current one only if it is better by more than this.
const SWITCH_GAIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pessimistic,
    Optimistic,
}

/// Product states are `q * S + s`.
#[derive(Clone, Debug)]
pub struct ProductImdp<'a> {
    imdp: &'a Imdp,
    dfa: &'a Dfa,
    /// DFA letter of every IMDP state.
    letters: Vec<LabelSet>,
    /// `next[s * n + q']`: DFA state after entering `q'` from DFA state `s`.
    next: Vec<usize>,
}

impl<'a> ProductImdp<'a> {
    pub fn new(imdp: &'a Imdp, dfa: &'a Dfa) -> Result<Self> {
        let used = imdp.labels().iter().fold(LabelSet::EMPTY, |m, &l| m.union(l));
        let tr = dfa.translator(imdp.props(), used)?;
        let letters: Vec<LabelSet> = imdp.labels().iter().map(|&l| tr.letter(l)).collect();
        let next = (0..dfa.num_states()).flat_map(|s| letters.iter().map(move |&l| dfa.step(s, l))).collect();
        Ok(ProductImdp { imdp, dfa, letters, next })
    }

    pub fn num_states(&self) -> usize {
        self.imdp.num_states() * self.dfa.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.imdp.num_actions()
    }

    pub fn dfa_states(&self) -> usize {
        self.dfa.num_states()
    }

    #[inline]
    pub fn state(&self, q: usize, s: usize) -> usize {
        q * self.dfa.num_states() + s
    }

    #[inline]
    pub fn split(&self, p: usize) -> (usize, usize) {
        (p / self.dfa.num_states(), p % self.dfa.num_states())
    }

    pub fn is_trap(&self, p: usize) -> bool {
        self.split(p).0 == self.imdp.unsafe_state()
    }

    pub fn is_target(&self, p: usize) -> bool {
        let (q, s) = self.split(p);
        q != self.imdp.unsafe_state() && self.dfa.is_accepting(s)
    }

    /// Product state entered when a run starts in cell `q`.
    pub fn initial_state(&self, q: usize) -> usize {
        self.state(q, self.dfa.step(self.dfa.initial(), self.letters[q]))
    }

    /// `(p', P̌, P̂)` of the interval row of `(p, a)`.
    pub fn successors(&self, p: usize, a: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let (q, s) = self.split(p);
        let n = self.imdp.num_states();
        self.imdp.row(q, a).iter().map(move |t| (self.state(t.dest, self.next[s * n + t.dest]), t.lo, t.hi))
    }
}

/// Feasible distribution in `[lo, hi]` that minimizes (pessimistic) or
/// maximizes (optimistic) the expectation of `values`: every entry starts at
/// its lower bound and the remaining mass goes to entries in order of value.
/// Ties are broken by position.
pub fn allocate(lo: &[f64], hi: &[f64], values: &[f64], mode: Mode) -> Vec<f64> {
    let mut order: Vec<usize> = (0..lo.len()).collect();
    sort_by_value(&mut order, |i| values[i], mode);
    let mut p = lo.to_vec();
    let mut rest = 1.0 - lo.iter().sum::<f64>();
    for i in order {
        if rest <= 0.0 {
            break;
        }
        let room = hi[i] - lo[i];
        if room <= rest {
            p[i] = hi[i];
            rest -= room;
        } else {
            p[i] += rest;
            rest = 0.0;
        }
    }
    p
}

fn sort_by_value(order: &mut [usize], v: impl Fn(usize) -> f64, mode: Mode) {
    order.sort_by(|&i, &j| {
        let o = v(i).total_cmp(&v(j));
        let o = if mode == Mode::Pessimistic { o } else { o.reverse() };
        o.then(i.cmp(&j))
    });
}

/// Adversarial expectation over one interval row, given entries as
/// `(value, P̌, P̂ − P̌)`. Same result as [`allocate`] but without a full sort:
/// the slack is handed out by a weighted quickselect on the values.
fn backup(entries: &mut [(f64, f64, f64)], mode: Mode) -> f64 {
    let mut acc = 0.0;
    let mut rest = 1.0;
    for e in entries.iter_mut() {
        acc += e.1 * e.0;
        rest -= e.1;
        if mode == Mode::Optimistic {
            e.0 = -e.0;
        }
    }
    let sign = if mode == Mode::Optimistic { -1.0 } else { 1.0 };
    let mut s: &mut [(f64, f64, f64)] = entries;
    while rest > 0.0 && !s.is_empty() {
        let pivot = s[s.len() / 2].0;
        // three-way partition: [< pivot | == pivot | > pivot]
        let (mut lt, mut i, mut gt) = (0, 0, s.len());
        while i < gt {
            if s[i].0 < pivot {
                s.swap(i, lt);
                lt += 1;
                i += 1;
            } else if s[i].0 > pivot {
                gt -= 1;
                s.swap(i, gt);
            } else {
                i += 1;
            }
        }
        let below: f64 = s[..lt].iter().map(|e| e.2).sum();
        if below >= rest {
            s = &mut s[..lt];
            continue;
        }
        acc += sign * s[..lt].iter().map(|e| e.2 * e.0).sum::<f64>();
        rest -= below;
        let eq: f64 = s[lt..gt].iter().map(|e| e.2).sum();
        let take = eq.min(rest);
        acc += sign * take * pivot;
        rest -= take;
        s = &mut s[gt..];
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViOutcome {
    pub values: Vec<f64>,
    /// Chosen action per product state (0 on targets and traps).
    pub strategy: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Robust value iteration for reaching the target states, from the zero
/// vector with synchronous updates. With `fixed` the strategy is evaluated
/// instead of optimized.
pub fn robust_value_iteration(product: &ProductImdp<'_>, mode: Mode, fixed: Option<&[usize]>, tol: f64, max_iters: usize) -> Result<ViOutcome> {
    let n = product.num_states();
    let na = product.num_actions();
    if let Some(f) = fixed {
        if f.len() != n {
            return Err(Error::MissingStrategy(f.len()));
        }
        if let Some(p) = (0..n).find(|&p| f[p] >= na) {
            return Err(Error::MissingStrategy(p));
        }
    }
    let mut values: Vec<f64> = (0..n).map(|p| if product.is_target(p) { 1.0 } else { 0.0 }).collect();
    let mut strategy: Vec<usize> = fixed.map_or_else(|| vec![0; n], <[usize]>::to_vec);
    let mut first = true;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let (v, st) = (&values, &strategy);
        let step = par::map_range(n, |p| {
            if product.is_target(p) || product.is_trap(p) {
                return (v[p], st[p]);
            }
            let mut buf = Vec::new();
            let mut eval = |a: usize| {
                buf.clear();
                buf.extend(product.successors(p, a).map(|(d, lo, hi)| (v[d], lo, hi - lo)));
                backup(&mut buf, mode)
            };
            if fixed.is_some() {
                return (eval(st[p]), st[p]);
            }
            let q: Vec<f64> = (0..na).map(&mut eval).collect();
            let mut best = if first { 0 } else { st[p] };
            for (a, &qa) in q.iter().enumerate() {
                let better = if first { qa > q[best] } else { qa > q[best] + SWITCH_GAIN };
                if better {
                    best = a;
                }
            }
            // the value is always the maximum, whichever action is kept
            let vmax = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (vmax, best)
        });
        let mut delta: f64 = 0.0;
        for (p, (nv, a)) in step.into_iter().enumerate() {
            delta = delta.max((nv - values[p]).abs());
            values[p] = nv;
            strategy[p] = a;
        }
        first = false;
        if delta < tol {
            converged = true;
            break;
        }
    }
    Ok(ViOutcome { values, strategy, iterations, converged })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Yes,
    No,
    Unknown,
}

impl Class {
    pub fn name(self) -> &'static str {
        match self {
            Class::Yes => "yes",
            Class::No => "no",
            Class::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub threshold: f64,
    pub dfa: Dfa,
    /// DFA letter of every IMDP state (`q_u` last).
    pub letters: Vec<LabelSet>,
    /// Action per product state `q * S + s`.
    pub strategy: Vec<usize>,
    /// Satisfaction bounds per cell, taken at the product state a run
    /// starting in the cell enters.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub classes: Vec<Class>,
    pub iterations: usize,
    pub converged: bool,
}

impl SynthesisResult {
    pub fn num_cells(&self) -> usize {
        self.lower.len()
    }

    pub fn action(&self, cell: usize, dfa_state: usize) -> Result<usize> {
        let p = cell * self.dfa.num_states() + dfa_state;
        self.strategy.get(p).copied().ok_or(Error::MissingStrategy(p))
    }

    /// DFA state after reading the label of `cell` from `s`.
    pub fn advance(&self, s: usize, cell: usize) -> usize {
        self.dfa.step(s, self.letters[cell])
    }

    /// Volume percentages of the yes, no and unknown classes given each
    /// cell's fraction of the domain volume.
    pub fn class_percentages(&self, fractions: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, f) in self.classes.iter().zip(fractions) {
            let k = match c {
                Class::Yes => 0,
                Class::No => 1,
                Class::Unknown => 2,
            };
            out[k] += 100.0 * f;
        }
        out
    }
}

pub fn classify(lower: f64, upper: f64, threshold: f64) -> Class {
    if lower >= threshold {
        Class::Yes
    } else if upper < threshold {
        Class::No
    } else {
        Class::Unknown
    }
}

/// Strategy from pessimistic robust value iteration, with `p̌` and `p̂` of
/// that strategy against the pessimistic and optimistic adversaries.
pub fn synthesize(imdp: &Imdp, dfa: &Dfa, threshold: f64) -> Result<SynthesisResult> {
    synthesize_with(imdp, dfa, threshold, DEFAULT_TOL, DEFAULT_MAX_ITERS)
}

pub fn synthesize_with(imdp: &Imdp, dfa: &Dfa, threshold: f64, tol: f64, max_iters: usize) -> Result<SynthesisResult> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument("threshold must lie in [0, 1]".into()));
    }
    let prod = ProductImdp::new(imdp, dfa)?;
    let opt = robust_value_iteration(&prod, Mode::Pessimistic, None, tol, max_iters)?;
    let lo = robust_value_iteration(&prod, Mode::Pessimistic, Some(&opt.strategy), tol, max_iters)?;
    let hi = robust_value_iteration(&prod, Mode::Optimistic, Some(&opt.strategy), tol, max_iters)?;
    let cells = imdp.num_cells();
    let mut lower = Vec::with_capacity(cells);
    let mut upper = Vec::with_capacity(cells);
    for q in 0..cells {
        let p = prod.initial_state(q);
        let l = lo.values[p].clamp(0.0, 1.0);
        lower.push(l);
        upper.push(hi.values[p].clamp(l, 1.0));
    }
    let classes = lower.iter().zip(&upper).map(|(&l, &u)| classify(l, u, threshold)).collect();
    Ok(SynthesisResult {
        threshold,
        dfa: dfa.clone(),
        letters: prod.letters.clone(),
        strategy: opt.strategy,
        lower,
        upper,
        classes,
        iterations: opt.iterations + lo.iterations + hi.iterations,
        converged: opt.converged && lo.converged && hi.converged,
    })
}

/// Action for the last cell of an abstract path: the DFA is run over the
/// path's labels and the product strategy is queried. A path ending in
/// `q_u` gets action 0.
pub fn strategy_lookup(result: &SynthesisResult, path: &[usize]) -> Result<usize> {
    let (&last, _) = path.split_last().ok_or_else(|| Error::InvalidArgument("empty path".into()))?;
    if let Some(&bad) = path.iter().find(|&&c| c >= result.letters.len()) {
        return Err(Error::InvalidArgument(alloc::format!("cell {bad} is not in the partition")));
    }
    if last >= result.num_cells() {
        return Ok(0);
    }
    let s = path.iter().fold(result.dfa.initial(), |s, &c| result.advance(s, c));
    result.action(last, s)
}

#[cfg(test)]
mod tests;
