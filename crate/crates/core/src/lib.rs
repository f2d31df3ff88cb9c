//! Compressed distributed gradient descent on synthetic finite-sum problems.
//!
//! The crate has four layers:
//!
//! * [`compressors`]: encoders, decoders, wire format and contraction factors.
//! * [`objectives`]: quadratic and logistic client suites with exact
//!   constants (`L`, `B²`, `f*`).
//! * [`algorithms`]: GD, direct compression (DCGD) and compressed aggregated
//!   feedback (CAFE) round loops producing per-round traces.
//! * [`theory`]: convergence bounds and per-round inequality checks on traces.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar for the common cases.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod compressors;
pub mod linalg;
pub mod objectives;
pub mod rng;
pub mod scalar;
pub mod theory;

pub use algorithms::{
    ef21_reference, run, run_cafe, run_dcgd, run_gd, Algorithm, History, RoundRecord, RunConfig, RunError, RunStatus,
};
pub use compressors::{
    compress, decode, encode, omega_analytic, omega_estimate, payload_bytes, CompressError, CompressorSpec,
    EncodedMessage,
};
pub use objectives::{Objective, ObjectiveError, SuiteKind};
pub use scalar::Scalar;
pub use theory::{BoundReport, Scheme, TheoryError};

pub type ProblemSuite = objectives::ProblemSuite<f64>;
pub type QuadraticSuite = objectives::QuadraticSuite<f64>;
pub type LogisticSuite = objectives::LogisticSuite<f64>;
pub type RunTrace = algorithms::RunTrace<f64>;
pub type TheoremInputs = theory::TheoremInputs<f64>;
pub type Matrix = linalg::Matrix<f64>;

pub type ProblemSuite32 = objectives::ProblemSuite<f32>;
pub type QuadraticSuite32 = objectives::QuadraticSuite<f32>;
pub type LogisticSuite32 = objectives::LogisticSuite<f32>;
pub type RunTrace32 = algorithms::RunTrace<f32>;
pub type TheoremInputs32 = theory::TheoremInputs<f32>;
pub type Matrix32 = linalg::Matrix<f32>;
