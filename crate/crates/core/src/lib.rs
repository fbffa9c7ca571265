//! Charger–battery pair coupled through a shared dissipative reservoir,
//! reduced to a two-mode non-Hermitian model with tunable exceptional points.
//!
//! Time is in units of `1 / gamma_eff` throughout unless a function says
//! otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod integrator;
pub mod model;
pub mod numeric;
pub mod propagator;
pub mod spectral;
pub mod sweep;

pub use model::{PhysicalParams, ReducedParams};
