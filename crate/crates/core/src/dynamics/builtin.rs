//! Built-in benchmark systems and their labeled environments.
//!
//! The vector fields are self-contained defaults: a four-mode switched
//! nonlinear system, a seven-action Dubins car, a three-action second-order
//! car and the sinusoidal field `(sin(x₁+x₂), cos(x₁−x₂))`. Other fields can be
//! supplied as a [`TermField`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::field::{Factor, Func, Term, TermField};
use super::labels::{LabelMap, LabelSet, LabeledRegion};
use super::SystemSpec;
use crate::error::{Error, Result};
use crate::geometry::Region;

pub const BUILTIN_SYSTEMS: [&str; 4] = ["nonlinear2d", "dubins3d", "car5d", "sinusoid2d"];

fn id(v: usize) -> Factor {
    Factor::of(Func::Identity, v)
}

fn sin(v: usize) -> Factor {
    Factor::of(Func::Sin, v)
}

fn cos(v: usize) -> Factor {
    Factor::of(Func::Cos, v)
}

const PUSH: f64 = 0.5;
const ALONG: f64 = 0.1;
const ACROSS: f64 = 0.1;

fn nonlinear2d() -> TermField {
    // Four modes, each pushing mainly along one axis with a sinusoidal drift
    // on the other.
    let push = |axis: usize, sign: f64| -> Vec<Vec<Term>> {
        let other = 1 - axis;
        let mut coords = vec![Vec::new(), Vec::new()];
        coords[axis] = vec![Term::linear(1.0, axis), Term::constant(PUSH * sign), Term::of(ALONG, vec![sin(other)])];
        coords[other] = vec![Term::linear(1.0, other), Term::of(ACROSS, vec![cos(axis)])];
        coords
    };
    TermField { dim: 2, actions: vec![push(0, 1.0), push(0, -1.0), push(1, 1.0), push(1, -1.0)] }
}

const DUBINS_SPEED: f64 = 0.5;
const DUBINS_TURN_RATES: [f64; 7] = [-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3];

fn dubins3d() -> TermField {
    let actions = DUBINS_TURN_RATES
        .iter()
        .map(|&w| {
            vec![
                vec![Term::linear(1.0, 0), Term::of(DUBINS_SPEED, vec![cos(2)])],
                vec![Term::linear(1.0, 1), Term::of(DUBINS_SPEED, vec![sin(2)])],
                vec![Term::linear(1.0, 2), Term::constant(w)],
            ]
        })
        .collect();
    TermField { dim: 3, actions }
}

const CAR_DT: f64 = 0.5;
const CAR_STEER: [f64; 3] = [-0.3, 0.0, 0.3];

fn car5d() -> TermField {
    // state (x, y, heading, speed, turn rate)
    let actions = CAR_STEER
        .iter()
        .map(|&u| {
            vec![
                vec![Term::linear(1.0, 0), Term::of(CAR_DT, vec![id(3), cos(2)])],
                vec![Term::linear(1.0, 1), Term::of(CAR_DT, vec![id(3), sin(2)])],
                vec![Term::linear(1.0, 2), Term::linear(CAR_DT, 4)],
                vec![Term::linear(0.9, 3), Term::constant(0.1)],
                vec![Term::linear(0.5, 4), Term::constant(u)],
            ]
        })
        .collect();
    TermField { dim: 5, actions }
}

fn sinusoid2d() -> TermField {
    let s = Factor { func: Func::Sin, lin: vec![(0, 1.0), (1, 1.0)], offset: 0.0 };
    let c = Factor { func: Func::Cos, lin: vec![(0, 1.0), (1, -1.0)], offset: 0.0 };
    TermField { dim: 2, actions: vec![vec![vec![Term::of(1.0, vec![s])], vec![Term::of(1.0, vec![c])]]] }
}

/// The term representation of a built-in field.
pub fn builtin_term_field(name: &str) -> Result<TermField> {
    match name {
        "nonlinear2d" => Ok(nonlinear2d()),
        "dubins3d" => Ok(dubins3d()),
        "car5d" => Ok(car5d()),
        "sinusoid2d" => Ok(sinusoid2d()),
        _ => Err(Error::UnknownName(name.to_string())),
    }
}

fn region(lo: &[f64], hi: &[f64]) -> Region {
    Region::new(lo.to_vec(), hi.to_vec()).expect("builtin region")
}

pub fn builtin_system(name: &str) -> Result<SystemSpec> {
    let field = builtin_term_field(name)?;
    let (domain, noise, actions): (Region, Vec<f64>, Vec<String>) = match name {
        "nonlinear2d" => (
            region(&[-2.0, -2.0], &[2.0, 2.0]),
            vec![0.01, 0.01],
            ["right", "left", "up", "down"].iter().map(|s| s.to_string()).collect(),
        ),
        "dubins3d" => (
            region(&[0.0, 0.0, -0.8], &[10.0, 2.0, 0.8]),
            vec![0.005, 0.005, 0.001],
            DUBINS_TURN_RATES.iter().map(|w| format!("turn{w:+.1}")).collect(),
        ),
        "car5d" => (
            region(&[0.0, 0.0, -1.0, 0.5, -0.6], &[10.0, 4.0, 1.0, 1.5, 0.6]),
            vec![0.005, 0.005, 0.001, 0.001, 0.001],
            ["right", "straight", "left"].iter().map(|s| s.to_string()).collect(),
        ),
        "sinusoid2d" => (region(&[-2.0, -2.0], &[2.0, 2.0]), vec![0.01, 0.01], vec!["none".to_string()]),
        _ => unreachable!(),
    };
    SystemSpec::new(name, actions, domain, noise, Arc::new(field))
}

/// Default labeled environment for a built-in system.
///
/// * `nonlinear2d`: goals `a` and `c`, obstacle `b` (three-proposition task).
/// * `dubins3d`, `car5d`: a stationary obstacle `b` and a goal strip `a` ahead of it.
/// * `sinusoid2d`: a single goal `a`.
pub fn builtin_labels(name: &str) -> Result<LabelMap> {
    let props = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let lr = |lo: &[f64], hi: &[f64], props: &[usize]| LabeledRegion {
        region: region(lo, hi),
        labels: LabelSet::from_props(props),
    };
    match name {
        "nonlinear2d" => LabelMap::new(
            props(&["a", "b", "c"]),
            vec![
                lr(&[-1.5, 0.5], &[-0.5, 1.5], &[0]),
                lr(&[-0.5, -0.5], &[0.5, 0.5], &[1]),
                lr(&[0.5, -1.5], &[1.5, -0.5], &[2]),
            ],
        ),
        "dubins3d" => LabelMap::new(
            props(&["a", "b"]),
            vec![lr(&[4.0, 0.0, -0.8], &[6.0, 1.0, 0.8], &[1]), lr(&[8.0, 0.0, -0.8], &[10.0, 2.0, 0.8], &[0])],
        ),
        "car5d" => LabelMap::new(
            props(&["a", "b"]),
            vec![
                lr(&[4.0, 0.0, -1.0, 0.5, -0.6], &[6.0, 2.0, 1.0, 1.5, 0.6], &[1]),
                lr(&[8.0, 0.0, -1.0, 0.5, -0.6], &[10.0, 4.0, 1.0, 1.5, 0.6], &[0]),
            ],
        ),
        "sinusoid2d" => LabelMap::new(props(&["a"]), vec![lr(&[1.0, 1.0], &[2.0, 2.0], &[0])]),
        _ => Err(Error::UnknownName(name.to_string())),
    }
}
