//! Scalar abstraction: the whole pipeline is generic over f32/f64.

use std::fmt;
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type usable throughout the pipeline.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ScalarOperand
    + Sum
    + Send
    + Sync
    + fmt::Display
    + fmt::Debug
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Widen to f64 for logging and serialization.
#[inline]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("scalar representable as f64")
}

/// Narrow from f64; panics on values outside the target type's range,
/// which cannot happen for the in-range constants this crate uses.
#[inline]
pub fn from_f64<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 representable in scalar type")
}
