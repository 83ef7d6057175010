//! Two-species one-dimensional Vlasov-Poisson simulator (classical and
//! relativistic transport) instrumented with the decay functionals,
//! integral identities and conservation monitors of the system.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod field;
pub mod integrator;
pub mod output;
pub mod phase_space;
pub mod pic;

pub use error::{Boundary, Error, Result};
pub use phase_space::{ModelKind, PhaseGrid, SpeciesState, SystemState};
