//! Scalar abstraction for the numeric kernels.
//!
//! Everything numeric in this crate is generic over [`Real`], implemented
//! for `f32` and `f64`. The crate root exports `f64` aliases, which is what
//! the CLI and most callers use.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};
use rand::distr::uniform::SampleUniform;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + SampleUniform
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Draw a standard normal variate.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw from a gamma distribution with the given shape and scale.
    ///
    /// Callers must have validated `shape > 0` and `scale > 0`.
    fn gamma_sample<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self;
}

impl Real for f32 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn gamma_sample<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self {
        Gamma::new(shape, scale)
            .expect("gamma parameters validated by caller")
            .sample(rng)
    }
}

impl Real for f64 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn gamma_sample<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self {
        Gamma::new(shape, scale)
            .expect("gamma parameters validated by caller")
            .sample(rng)
    }
}

/// Convert an `f64` constant into the working scalar type.
pub(crate) fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("constant not representable in scalar type")
}

/// Reduce `x` into `[0, period)`.
pub(crate) fn wrap<T: Real>(x: T, period: T) -> T {
    let r = x % period;
    if r < T::zero() {
        r + period
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_reduces_into_period() {
        assert_eq!(wrap(25.5_f64, 24.0), 1.5);
        assert_eq!(wrap(-0.5_f64, 24.0), 23.5);
        assert_eq!(wrap(24.0_f64, 24.0), 0.0);
        assert_eq!(wrap(3.25_f32, 24.0), 3.25);
    }
}
