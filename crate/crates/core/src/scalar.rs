//! Floating-point abstraction used by every numeric module.
//!
//! All math in this crate is written against [`Scalar`] so the same code
//! runs in `f32` and `f64`. Production entry points pin `f64` through the
//! type aliases exported at the crate root; `f32` mostly serves to keep the
//! code honest about precision assumptions.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// A real scalar with the operations the numeric stack needs.
///
/// The supertraits are deliberately broad: `Float` brings the usual
/// transcendental functions, `FromPrimitive`/`ToPrimitive` allow lossless
/// traffic with `f64` constants and with serialization, and `NumAssignOps`
/// keeps inner loops free of `x = x + y` noise.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into `T`.
///
/// Every literal in the crate flows through here, so the conversion is a
/// single audited point. Panics if the conversion fails, which cannot
/// happen for finite constants and the two provided impls.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must be representable in the scalar type")
}

/// Widens a scalar back to `f64` for reporting and serialization.
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("scalar must be representable as f64")
}
