//! Scalar abstraction: the whole library is generic over the float type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, Signed};

/// Floating-point scalar the library math is written against: `f32` or `f64`.
///
/// The bounds are chosen so that `T: Real` also satisfies `rustfft::FftNum`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Signed
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    /// Shorthand for lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable")
    }

    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}
