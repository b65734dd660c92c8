//! Phase-space flow of cohomogeneity-one Spin(7) metrics on the cone over an
//! Aloff-Wallach space `N(k,l)`.
//!
//! The crate covers the polynomial vector field, its critical points, the
//! invariant and trapping sets, an adaptive integrator with event detection,
//! shooting from the unstable manifolds of the smooth-extension points, and
//! recovery of the metric coefficients from a phase trajectory.

pub mod critical;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod jet;
pub mod metric;
pub mod phase;
pub mod sets;
pub mod shooting;
pub mod verify;

pub use error::{Error, Result};
pub use phase::{validate_pair, Branch, CoprimePair, Orbit, PhasePoint};
