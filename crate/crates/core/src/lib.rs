//! Implicit time discretisation of the evolutionary p-Laplace equation with
//! multiplicative compensated-Poisson noise
//!
//! `du - div(|∇u|^{p-2}∇u + f⃗(u)) dt = ∫ η(u; z) Ñ(dz, dt)`, `u = 0` on `∂D`,
//! `u(0) = u0 + U`,
//!
//! on `D = (0,1)^d`, `d ∈ {1, 2}`, together with Monte Carlo checks of the
//! scheme's energy and increment estimates and a sample-average optimiser for
//! the initial-value control `U`.
//!
//! Modules, bottom up:
//! - [`grid`]: uniform grids, nodal fields, difference operators and norms;
//! - [`levy`]: Lévy measures, Poisson random measure sampling, compensated increments;
//! - [`scheme`]: per-step nonlinear solve, trajectories and interpolants;
//! - [`estimates`]: ensemble statistics, scaling fits, isometry and uniqueness checks;
//! - [`control`]: cost functional and the common-random-number simplex search.

// `!(x > 0.0)` is used on purpose to reject NaN alongside nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod control;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod levy;
pub mod rng;
pub mod scheme;
pub mod stats;

pub use error::{Assumption, Error, Result};
pub use grid::{Field, Grid, Space};
pub use levy::{LevyMeasure, LevyModel, NoiseCoefficient, PrmPath};
pub use scheme::{ControlProjection, FluxModel, SchemeConfig, SolverOptions, Trajectory};
