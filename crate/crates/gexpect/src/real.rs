//! Scalar abstraction: the whole engine is generic over the floating-point
//! type, with `f64` as the default used by the CLI.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::AddAssign;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable throughout the engine (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Significant decimal digits guaranteeing a lossless text round-trip.
    const SIG_DIGITS: usize;
}

impl Real for f32 {
    const SIG_DIGITS: usize = 9;
}

impl Real for f64 {
    const SIG_DIGITS: usize = 17;
}

/// Shorthand for pulling an `f64` literal into the working scalar type.
#[inline]
pub fn real<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("literal representable in scalar type")
}
