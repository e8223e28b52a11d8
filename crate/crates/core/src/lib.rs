//! Water-to-air transition stack for a planar delta-wing aerial-aquatic vehicle.
//!
//! The crate is organised as a pipeline:
//!
//! - [`dynamics`]: hybrid longitudinal vehicle model, guards and linearization.
//! - [`trajopt`]: multi-phase Hermite-Simpson trajectory optimization with an SQP solver.
//! - [`control`]: TVLQR synthesis, trim, infinite-horizon LQR and the hybrid controller automaton.
//! - [`estimation`]: mode-switched EKF and domain sensors.
//! - [`sim`]: event-located hybrid simulation, sensor synthesis and Monte-Carlo sweeps.
//! - [`config`] and [`cli`]: the file-based command-line pipeline.

// Index loops mirror the matrix notation; negated comparisons deliberately treat NaN as failure.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod estimation;
pub mod linalg;
pub mod sim;
pub mod trajopt;
