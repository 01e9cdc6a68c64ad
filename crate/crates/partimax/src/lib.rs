//! Near-optimal selection of k overlapping pixel boxes under a particle belief.
//!
//! A camera plane is covered by `t` mutually shifted box tilings ([`tiling`]).
//! Target positions are tracked with unweighted particle filters ([`belief`]).
//! Selecting which k boxes to hand to an expensive detector is a monotone
//! submodular maximization problem whose utility is the number of particles
//! covered by the selected boxes; [`coverage`] maintains that utility
//! incrementally and [`select`] implements the selectors:
//!
//! * exhaustive search (small instances only),
//! * greedy argmax over all boxes,
//! * stochastic greedy over a sampled candidate subset,
//! * PartiMax, which samples candidates proportionally to their marginal
//!   gain by drawing uncovered particles instead of scanning boxes.
//!
//! [`simulate`] provides a synthetic multi-person tracking benchmark and
//! [`verify`] packages the statistical guarantee checks behind each selector.
//!
//! All floating-point state is generic over [`scalar::Scalar`] (`f32` or
//! `f64`); the aliases below fix the default `f64` instantiation.

pub mod belief;
pub mod coverage;
pub mod error;
pub mod scalar;
pub mod select;
pub mod simulate;
pub mod tiling;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type for CLI and benchmark entry points.
pub type Real = f64;

/// `f64` particle state.
pub type State64 = belief::State<f64>;
/// `f64` particle belief.
pub type Belief64 = belief::ParticleBelief<f64>;
/// `f64` motion model.
pub type MotionModel64 = belief::MotionModel<f64>;
/// `f64` detector model.
pub type DetectorModel64 = belief::DetectorModel<f64>;
/// `f64` observation.
pub type Observation64 = belief::Observation<f64>;
/// `f64` trajectory.
pub type Trajectory64 = simulate::Trajectory<f64>;
