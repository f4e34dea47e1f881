//! Geometry of time-dependent Lagrangians on the 1-jet space J¹(ℝ, M).
//!
//! Points carry a relativistic time `t`, spatial coordinates `xⁱ` and
//! velocities `y₁ⁱ`. The crate builds semisprays, nonlinear connections,
//! adapted frames and the gravitational potential from user metrics or jet
//! Lagrangians, integrates harmonic and autoparallel curves, and checks the
//! transformation laws of all of these objects under changes of coordinates.

pub mod covariance;
pub mod dtensor;
pub mod dynamics;
pub mod error;
pub mod exprlang;
pub mod generator;
pub mod jet;
pub mod lagrange;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod spray;

pub use error::{Error, Result};
pub use jet::{JetChange, JetPoint, SpaceChange, TimeChange};
