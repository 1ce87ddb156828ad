//! Floating-point abstraction used by the surrogate and optimization layers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the Gaussian-process machinery is generic over.
///
/// Implemented for `f32` and `f64`. Special functions (normal CDF) are
/// evaluated in `f64` and converted back.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
}

/// Standard normal density.
pub fn normal_pdf<T: Scalar>(z: T) -> T {
    let z = z.as_f64();
    T::lit((-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Standard normal distribution function.
pub fn normal_cdf<T: Scalar>(z: T) -> T {
    let z = z.as_f64();
    T::lit(0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2))
}
