//! Scalar abstraction: the numerical core is generic over the floating type.

use std::fmt::{Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating scalar usable in all field and solver kernels: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + FftNum + Sum + Display + LowerExp + 'static
{
    /// Lossy conversion from `f64`, for literals and tolerances.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Real")
    }

    /// Conversion to `f64` for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
