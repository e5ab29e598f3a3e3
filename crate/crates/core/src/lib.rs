//! Averaged dynamic friction control: set-valued friction dynamics, exact
//! proximal integration, grid reachability, free-time Mayer value functions
//! and numerical checks of their Hamilton-Jacobi characterization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod hjb;
pub mod integrator;
pub mod reachability;
pub mod repro;
pub mod sampling;
pub mod scenario;
pub mod sets;
pub mod toy;
pub mod verify;

pub use error::{Error, Result};
pub use scenario::{estimate_constants, Scenario, StructuralConstants};
