//! Scalar abstraction shared by every geometric and volumetric routine.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + FromStr + Default + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// An absolute tolerance that is `nominal` in double precision and relaxes
/// to a few ulps of `T` when `T` cannot resolve `nominal`.
#[inline]
pub fn tol<T: Real>(nominal: f64) -> T {
    lit::<T>(nominal).max(T::epsilon() * lit(64.0))
}

/// Rounds half-up and clamps to the 8-bit intensity range.
#[inline]
pub fn to_intensity<T: Real>(v: T) -> u8 {
    let r = v + lit(0.5);
    // floor(r) <= 0 exactly when r < 1; NaN lands here too
    if !(r >= T::one()) {
        0
    } else if r >= lit(255.0) {
        255
    } else {
        r.to_u8().unwrap_or(0)
    }
}
