//! Learning-based abstraction and robust control synthesis for stochastic systems.
//!
//! The crate learns per-action dynamics with Gaussian-process and deep-kernel
//! models, bounds the learned posterior over boxes of the state space, builds an
//! interval Markov decision process (IMDP) from those bounds and synthesizes
//! strategies against DFA-encoded finite-trace objectives.
//!
//! The crate is `no_std` (with `alloc`). The `parallel` feature enables rayon
//! for the embarrassingly parallel stages (model training per action, IMDP rows).

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod abstraction;
pub mod dkl;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod linalg;
pub mod math;
pub mod nn;
pub mod refinement;
pub mod simulation;
pub mod synthesis;

mod par;

pub use error::{Error, Result};
pub use geometry::{Interval, Region};
