//! Scalar abstraction for the whole crate.
//!
//! All numerics are generic over a real floating-point type; `f64` is what
//! the concrete aliases at the crate root use, `f32` works for quick
//! low-accuracy runs.

use nalgebra as na;
use num_complex::Complex;
use num_traits as nt;

/// Real scalar the workbench can run on: `f32` or `f64`.
pub trait LzFloat: Copy + na::RealField + nt::FromPrimitive + nt::ToPrimitive {}

impl LzFloat for f32 {}
impl LzFloat for f64 {}

/// Shorthand for the matching complex type.
pub type C<T> = Complex<T>;

/// Converts an `f64` literal into the working scalar.
#[inline]
pub(crate) fn real<T: LzFloat>(x: f64) -> T {
    T::from_f64(x).expect("literal not representable in scalar type")
}

/// Unit complex number `exp(i*phase)`.
#[inline]
pub(crate) fn cis<T: LzFloat>(phase: T) -> C<T> {
    C::new(phase.cos(), phase.sin())
}

/// `true` for ordinary (non-NaN, non-infinite) values.
///
/// `x - x` is zero exactly when `x` is finite (NaN and infinities yield
/// NaN), which avoids widening the trait bounds.
#[inline]
#[allow(clippy::eq_op)]
pub(crate) fn is_finite<T: LzFloat>(x: T) -> bool {
    x - x == T::zero()
}

/// Modulus of a complex number without requiring `num_traits::Float`.
#[inline]
pub(crate) fn cnorm<T: LzFloat>(z: C<T>) -> T {
    z.norm_sqr().sqrt()
}

/// `dst += a * x` for same-shape matrices.
#[inline]
pub(crate) fn maxpy<T: LzFloat>(
    dst: &mut nalgebra::DMatrix<C<T>>,
    a: C<T>,
    x: &nalgebra::DMatrix<C<T>>,
) {
    dst.zip_apply(x, |d, xv| *d += a * xv);
}
