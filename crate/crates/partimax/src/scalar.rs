//! Scalar abstraction: the library runs on `f32` or `f64` positions.

use rand::distr::uniform::SampleUniform;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar for positions, velocities and noise magnitudes.
///
/// Bundles every bound the library needs so downstream signatures carry a
/// single `S: Scalar`. Implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + SampleUniform
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Draws one standard normal sample.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Conversion from an integer pixel coordinate. Exact for every plane and
    /// box dimension the library accepts (|v| stays far below 2^24, the f32
    /// exact-integer limit).
    fn from_pixels(v: i64) -> Self {
        Self::from_i64(v).expect("pixel coordinate representable in scalar")
    }
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}
