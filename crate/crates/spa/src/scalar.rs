//! Scalar abstraction: every solver in this crate is generic over the
//! floating-point type through [`Scalar`].

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar (f32 or f64).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for tolerances and literals.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable in scalar type")
    }

    /// Lossy conversion to `f64`, for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }

    /// Conversion from a count (mesh sizes, step indices).
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
