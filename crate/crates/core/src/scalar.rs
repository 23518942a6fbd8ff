//! Floating-point abstraction for the whole crate.
//!
//! Everything numeric is generic over [`Real`] so the same code runs in `f32`
//! or `f64`; the crate root exports `f64` aliases for the common types.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use serde::{de::DeserializeOwned, Serialize};

/// Scalar type the toolkit computes in: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Draw from the standard normal distribution.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw uniformly from the half-open interval `[lo, hi)`.
    fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self;

    /// Lossy conversion from `f64`, for literals and counts.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 -> Real conversion")
    }

    /// Conversion from a count.
    fn cast_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize -> Real conversion")
    }
}

macro_rules! impl_real {
    ($($t:ty),*) => {$(
        impl Real for $t {
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.sample::<$t, _>(rand_distr::StandardNormal)
            }

            fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self {
                rng.random_range(lo..hi)
            }
        }
    )*};
}

impl_real!(f32, f64);

/// Numerically stable logistic sigmoid `1 / (1 + exp(-z))`.
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(sum(exp(xs)))` guarded against overflow; `-inf` for an empty slice.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().cloned().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    let s = xs.iter().map(|&x| (x - m).exp()).sum::<T>();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_definition() {
        for &z in &[-30.0f64, -2.0, -0.5, 0.0, 0.5, 2.0, 30.0] {
            let direct = 1.0 / (1.0 + (-z).exp());
            assert!((sigmoid(z) - direct).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0f64), 0.5);
        // ln 3 -> 3/4
        assert!((sigmoid(3.0f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_finite_in_the_tails() {
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
    }

    #[test]
    fn log_sum_exp_handles_large_offsets() {
        let xs = [-1000.0f64, -1000.0];
        let expected = -1000.0 + 2.0f64.ln();
        assert!((log_sum_exp(&xs) - expected).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }
}
