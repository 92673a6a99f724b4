use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point type the pricing core is generic over.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    fn half() -> Self {
        Self::lit(0.5)
    }

    fn two() -> Self {
        Self::lit(2.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Positive part `max(v, 0)`; NaN is propagated.
#[inline]
pub fn pos<T: Scalar>(v: T) -> T {
    if v > T::zero() || v.is_nan() {
        v
    } else {
        T::zero()
    }
}

/// Negative part `max(-v, 0)`; NaN is propagated.
#[inline]
pub fn neg<T: Scalar>(v: T) -> T {
    if v < T::zero() || v.is_nan() {
        -v
    } else {
        T::zero()
    }
}

/// Converts a count into the scalar type.
#[inline]
pub fn from_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}
