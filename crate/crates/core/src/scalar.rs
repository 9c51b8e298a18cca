//! Scalar abstraction shared by every numeric module.
//!
//! Training and inference run in `f32`; gradient checks and oracle tests run
//! the same code in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumCast};

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + NumCast
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 literal representable")
    }

    #[inline]
    fn of_f32(v: f32) -> Self {
        <Self as NumCast>::from(v).expect("f32 representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("finite conversion")
    }

    #[inline]
    fn as_f32(self) -> f32 {
        <f32 as NumCast>::from(self).expect("finite conversion")
    }

    #[inline]
    fn from_len(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("usize representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sum that does not depend on the order of `values`.
///
/// Values are summed in ascending order, so any permutation of the input
/// yields a bit-identical result. Used wherever a reduction runs over the
/// slot axis.
pub fn sorted_sum<T: Real>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    values.iter().fold(T::zero(), |acc, &v| acc + v)
}
