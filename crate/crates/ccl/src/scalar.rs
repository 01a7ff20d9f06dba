//! Scalar abstraction: the numeric core works for any IEEE float.

use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy cast from f64, for literals inside generic code.
    fn c(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Widen to f64 for reporting.
    fn f64(self) -> f64 {
        self.to_f64().expect("float widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
