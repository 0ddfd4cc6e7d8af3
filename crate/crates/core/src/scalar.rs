//! Floating-point scalar abstraction used throughout the crate.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the numerical core is generic over: `f32` or `f64`.
///
/// All tolerance-sensitive work (acceptance runs, Monte Carlo experiments)
/// is expected to use `f64`; `f32` is supported for callers that trade
/// precision for memory.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar type.
///
/// Panics only if the target type cannot represent the value at all, which
/// cannot happen for finite literals and `f32`/`f64`.
pub(crate) fn lit<T: Scalar>(value: f64) -> T {
    T::from_f64(value).expect("f64 literal must convert to the scalar type")
}

/// Converts a `usize` count into the working scalar type.
pub(crate) fn count<T: Scalar>(value: usize) -> T {
    T::from_usize(value).expect("usize count must convert to the scalar type")
}
