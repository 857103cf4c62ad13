//! Quantum Fisher information and parameter estimation for lossy quantum
//! probes: a three-level emitter with a dark sink, its non-Hermitian
//! reduction, N-probe ensembles, and shot-noise limited estimation.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod lindblad;
pub mod nonhermitian;
pub mod ode;
pub mod qfi;
pub mod rng;

pub use error::{Error, Result};
pub use lindblad::{DensityMatrix, Parameter, ThreeLevelParams, TimeGrid};
