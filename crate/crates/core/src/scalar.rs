//! Floating-point abstraction shared by every learner.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar the learners are generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the scalar type.
#[inline]
pub fn lit<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("literal representable in scalar type")
}

/// Checks that a scalar is finite, naming the quantity on failure.
#[inline]
pub(crate) fn ensure_finite<F: Scalar>(x: F, what: &'static str) -> crate::Result<F> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(crate::Error::NonFinite { what })
    }
}
