//! Deterministic finite automata over label sets.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::LabelSet;
use crate::error::{Error, Result};

/// Letters are bitmasks over `props`, so `δ` is a dense table of
/// `num_states × 2^|props|` successors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dfa {
    props: Vec<String>,
    num_states: usize,
    initial: usize,
    delta: Vec<usize>,
    accepting: Vec<bool>,
}

const MAX_PROPS: usize = 16;

impl Dfa {
    pub fn new(props: Vec<String>, num_states: usize, initial: usize, delta: Vec<usize>, accepting: &[usize]) -> Result<Self> {
        if props.len() > MAX_PROPS {
            return Err(Error::InvalidArgument("automaton alphabet has too many propositions".into()));
        }
        let letters = 1usize << props.len();
        if num_states == 0 || initial >= num_states {
            return Err(Error::InvalidArgument("automaton needs a valid initial state".into()));
        }
        if delta.len() != num_states * letters {
            return Err(Error::Dimension { expected: num_states * letters, got: delta.len() });
        }
        if delta.iter().any(|&t| t >= num_states) {
            return Err(Error::InvalidArgument("transition to an undeclared state".into()));
        }
        if accepting.is_empty() || accepting.iter().any(|&s| s >= num_states) {
            return Err(Error::InvalidArgument("accepting set must be a nonempty set of states".into()));
        }
        let mut acc = vec![false; num_states];
        accepting.iter().for_each(|&s| acc[s] = true);
        Ok(Dfa { props, num_states, initial, delta, accepting: acc })
    }

    /// Builds `δ` from a function of (state, letter).
    pub fn from_fn(props: Vec<String>, num_states: usize, initial: usize, accepting: &[usize], f: impl Fn(usize, LabelSet) -> usize) -> Result<Self> {
        let letters = 1u32 << props.len();
        let delta = (0..num_states).flat_map(|s| (0..letters).map(move |l| (s, l))).map(|(s, l)| f(s, LabelSet(l))).collect();
        Dfa::new(props, num_states, initial, delta, accepting)
    }

    /// `safe_reach`: never `b`, eventually `a`. `safe_reach_two`: never `b`,
    /// eventually `a` and eventually `c`.
    pub fn builtin(name: &str) -> Result<Self> {
        let p = |v: &[&str]| v.iter().map(|s| String::from(*s)).collect::<Vec<_>>();
        match name {
            // 0 seeking, 1 accepted, 2 rejected
            "safe_reach" => Dfa::from_fn(p(&["a", "b"]), 3, 0, &[1], |s, l| match s {
                _ if s == 2 || l.contains(1) => 2,
                _ if s == 1 || l.contains(0) => 1,
                _ => 0,
            }),
            // 0 nothing seen, 1 a seen, 2 c seen, 3 both, 4 trap
            "safe_reach_two" => Dfa::from_fn(p(&["a", "b", "c"]), 5, 0, &[3], |s, l| {
                if s == 4 || l.contains(1) {
                    return 4;
                }
                let a = s == 1 || s == 3 || l.contains(0);
                let c = s == 2 || s == 3 || l.contains(2);
                match (a, c) {
                    (true, true) => 3,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 0,
                }
            }),
            _ => Err(Error::UnknownName(name.into())),
        }
    }

    pub fn props(&self) -> &[String] {
        &self.props
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_letters(&self) -> usize {
        1 << self.props.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_accepting(&self, s: usize) -> bool {
        self.accepting[s]
    }

    pub fn accepting(&self) -> Vec<usize> {
        (0..self.num_states).filter(|&s| self.accepting[s]).collect()
    }

    /// `letter` must be a label over this automaton's propositions.
    #[inline]
    pub fn step(&self, s: usize, letter: LabelSet) -> usize {
        self.delta[s * self.num_letters() + letter.0 as usize]
    }

    pub fn run(&self, trace: &[LabelSet]) -> usize {
        trace.iter().fold(self.initial, |s, &l| self.step(s, l))
    }

    pub fn accepts(&self, trace: &[LabelSet]) -> bool {
        self.is_accepting(self.run(trace))
    }

    /// States from which no accepting state is reachable.
    pub fn dead_states(&self) -> Vec<bool> {
        let mut live = self.accepting.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..self.num_states {
                if !live[s] && (0..self.num_letters()).any(|l| live[self.delta[s * self.num_letters() + l]]) {
                    live[s] = true;
                    changed = true;
                }
            }
        }
        live.into_iter().map(|l| !l).collect()
    }

    /// Translates labels over `props` into letters of this automaton.
    /// Propositions absent from the automaton are an error only if `used`
    /// has them set.
    pub fn translator(&self, props: &[String], used: LabelSet) -> Result<Translator> {
        let mut map = Vec::with_capacity(props.len());
        for (i, name) in props.iter().enumerate() {
            let pos = self.props.iter().position(|p| p == name);
            if pos.is_none() && used.contains(i) {
                return Err(Error::AlphabetMismatch(name.clone()));
            }
            map.push(pos);
        }
        Ok(Translator { map })
    }
}

/// Proposition index map from a labelling alphabet into an automaton's.
#[derive(Clone, Debug)]
pub struct Translator {
    map: Vec<Option<usize>>,
}

impl Translator {
    pub fn letter(&self, l: LabelSet) -> LabelSet {
        LabelSet(l.iter().filter_map(|p| self.map.get(p).copied().flatten()).fold(0, |m, q| m | (1 << q)))
    }
}
