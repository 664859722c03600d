//! Closed-loop simulation of the true system under a synthesized strategy.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::Partition;
use crate::dynamics::{LabelMap, LabelSet, SystemSpec};
use crate::error::{Error, Result};
use crate::synthesis::{Dfa, SynthesisResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// The label trace reached an accepting automaton state.
    Satisfied,
    /// The automaton can no longer accept.
    Violated,
    /// The state left the domain.
    Exited,
    HorizonReached,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self == Outcome::Satisfied
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// Labels of each state over the label map's propositions.
    pub labels: Vec<LabelSet>,
    pub actions: Vec<usize>,
    pub outcome: Outcome,
}

/// Runs the system from `x0` for at most `horizon` steps. `policy` gets the
/// current state and automaton state and returns the action. The run stops
/// as soon as the outcome is decided.
pub fn simulate<R, F>(spec: &SystemSpec, labels: &LabelMap, dfa: &Dfa, x0: &[f64], horizon: usize, mut policy: F, rng: &mut R) -> Result<Trajectory>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64], usize) -> Result<usize>,
{
    if x0.len() != spec.dim() {
        return Err(Error::Dimension { expected: spec.dim(), got: x0.len() });
    }
    let universe = LabelSet(((1u64 << labels.props.len()) - 1) as u32);
    let tr = dfa.translator(&labels.props, universe)?;
    let dead = dfa.dead_states();
    let mut traj = Trajectory { states: Vec::new(), labels: Vec::new(), actions: Vec::new(), outcome: Outcome::HorizonReached };
    let mut x = x0.to_vec();
    let mut s = dfa.initial();
    for t in 0..=horizon {
        if !spec.domain.contains(&x) {
            traj.states.push(x);
            traj.labels.push(LabelSet::EMPTY);
            traj.outcome = Outcome::Exited;
            return Ok(traj);
        }
        let l = labels.label_of(&x);
        s = dfa.step(s, tr.letter(l));
        traj.states.push(x.clone());
        traj.labels.push(l);
        if dfa.is_accepting(s) {
            traj.outcome = Outcome::Satisfied;
            return Ok(traj);
        }
        if dead[s] {
            traj.outcome = Outcome::Violated;
            return Ok(traj);
        }
        if t == horizon {
            break;
        }
        let a = policy(&x, s)?;
        traj.actions.push(a);
        x = spec.step(&x, a, rng)?;
    }
    Ok(traj)
}

/// Simulation under the product strategy: the current state is mapped to
/// its cell and the action of (cell, automaton state) is applied.
pub fn simulate_under_strategy<R: Rng + ?Sized>(
    spec: &SystemSpec,
    partition: &Partition,
    result: &SynthesisResult,
    labels: &LabelMap,
    x0: &[f64],
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if result.num_cells() != partition.num_cells() {
        return Err(Error::Dimension { expected: partition.num_cells(), got: result.num_cells() });
    }
    let policy = |x: &[f64], s: usize| match partition.locate(x) {
        Some(c) => result.action(c, s),
        None => Err(Error::InvalidArgument("state inside the domain is not covered by the partition".into())),
    };
    simulate(spec, labels, &result.dfa, x0, horizon, policy, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin_system;
    use crate::geometry::Region;
    use alloc::string::String;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_constant_strategy_follows_the_orbit() {
        let spec = builtin_system("nonlinear2d").unwrap().noiseless();
        let labels = LabelMap::empty();
        // `a` never holds, so the run goes to the horizon
        let dfa = Dfa::new(vec![String::from("a")], 2, 0, vec![0, 1, 1, 1], &[1]).unwrap();
        let x0 = spec.domain.center();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = simulate(&spec, &labels, &dfa, &x0, 5, |_, _| Ok(1), &mut rng).unwrap();
        let mut x = x0.clone();
        for (k, y) in traj.states.iter().enumerate() {
            assert_eq!(y, &x, "step {k}");
            x = spec.mean_next(&x, 1).unwrap();
        }
        assert!(matches!(traj.outcome, Outcome::HorizonReached | Outcome::Exited));
        if traj.outcome == Outcome::HorizonReached {
            assert_eq!(traj.states.len(), 6);
        }
    }

    #[test]
    fn outcomes_follow_the_automaton() {
        let spec = builtin_system("nonlinear2d").unwrap().noiseless();
        let d = spec.domain.clone();
        let whole = |l| crate::dynamics::LabeledRegion { region: d.clone(), labels: l };
        let dfa = Dfa::builtin("safe_reach").unwrap();
        let props = vec![String::from("a"), String::from("b")];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x0 = d.center();
        let acc = LabelMap::new(props.clone(), vec![whole(LabelSet(1))]).unwrap();
        assert_eq!(simulate(&spec, &acc, &dfa, &x0, 3, |_, _| Ok(0), &mut rng).unwrap().outcome, Outcome::Satisfied);
        let bad = LabelMap::new(props, vec![whole(LabelSet(2))]).unwrap();
        assert_eq!(simulate(&spec, &bad, &dfa, &x0, 3, |_, _| Ok(0), &mut rng).unwrap().outcome, Outcome::Violated);
        let outside: Vec<f64> = d.hi.iter().map(|h| h + 1.0).collect();
        assert_eq!(simulate(&spec, &acc, &dfa, &outside, 3, |_, _| Ok(0), &mut rng).unwrap().outcome, Outcome::Exited);
        let r = Region::new(vec![0.0], vec![1.0]).unwrap();
        assert!(simulate(&spec, &acc, &dfa, &r.lo, 3, |_, _| Ok(0), &mut rng).is_err());
    }
}
