use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the numeric core is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Shorthand for lowering an `f64` constant into the scalar type.
    fn c(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 constant converts to scalar")
    }

    /// Lossless-enough view of the scalar as `f64` (exact for f32/f64).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn from_usize_exact(value: usize) -> Self {
        Self::from_usize(value).expect("dimension fits in scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
