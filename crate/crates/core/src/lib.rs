//! Finite volume schemes for the scalar balance law
//!
//! ```text
//! u_t + f(u)_x + z'(x) b(u) = 0   on ]x_l, x_r[ x ]0, T[
//! ```
//!
//! with inflow boundary data. The crate provides a well-balanced
//! Engquist-Osher scheme that preserves the discrete steady states
//! `D(u_j) + z_j = const` exactly, a standard source-splitting scheme for
//! comparison, entropy-inequality diagnostics, error norms and the presets
//! used to reproduce the Burgers-Hopf experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod entropy;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod flux;
pub mod grid;
pub mod model;
pub mod profile;
pub mod quadrature;
pub mod scheme;

pub use error::{Error, Result};
pub use flux::SplitFlux;
pub use grid::{Discretization, SolverState, Topography};
pub use model::{FluxModel, ModelKind, Problem, TopographyProfile};
pub use profile::{Profile, ScalarFn};
pub use scheme::{run, DtMode, RunOptions, RunResult, SchemeKind, StepPolicy};
