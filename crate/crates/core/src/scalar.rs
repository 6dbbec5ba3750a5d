//! Scalar abstractions for the exact process mathematics.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, Signed};

/// Field-like scalar: everything the PMF recursion and moment sums need.
///
/// Implemented for `f32`, `f64` and exact rationals.
pub trait Scalar:
    Clone + PartialOrd + Num + Signed + FromPrimitive + Debug + Send + Sync + 'static
{
    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("integer is representable")
    }

    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }
}

impl<T> Scalar for T where
    T: Clone + PartialOrd + Num + Signed + FromPrimitive + Debug + Send + Sync + 'static
{
}

/// Floating-point scalar (`f32` or `f64`).
pub trait Real: Scalar + Float {}

impl<T: Scalar + Float> Real for T {}

/// Integer power with negative exponents, valid for any [`Scalar`].
pub fn powi<T: Scalar>(base: &T, exp: i64) -> T {
    let p = num_traits::pow(base.clone(), exp.unsigned_abs() as usize);
    if exp < 0 {
        T::one() / p
    } else {
        p
    }
}
