//! Pipeline, file formats and command-line interface around `dklsynth-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod stats;
