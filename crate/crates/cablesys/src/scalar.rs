//! Scalar abstraction for the floating-point kernels.
//!
//! All mesh, solver, semigroup and quadrature code is generic over [`Scalar`]
//! so the same kernels run in `f32` or `f64`. The crate root exports
//! `Real = f64`, which is what the experiment drivers and the CLI use.
//! Exact skeleton algebra lives in [`crate::exact`] on `BigRational` instead.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lowering an `f64` constant into the working scalar type.
#[inline]
pub fn sc<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Lossy view of a scalar as `f64`, for reports and serialization.
#[inline]
pub fn to_f64<F: Scalar>(x: F) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}
