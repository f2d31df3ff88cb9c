//! Experiment harness: config files, runs, sweeps, verification and plot
//! data for the `cafe` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod omega;
pub mod output;
pub mod report;
pub mod sweep;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::HarnessError;
