//! Scalar abstraction shared by the numerical core.
//!
//! Every numerical routine is generic over [`Real`], which is satisfied by
//! `f32` and `f64`. Tolerances are written as `f64` literals and converted
//! with [`lit`]; [`tol`] additionally floors them at a small multiple of the
//! type's machine epsilon so that `f32` instantiations stay meaningful.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type usable throughout the crate.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

/// Complex number over a [`Real`] scalar.
pub type Cplx<T> = Complex<T>;

/// Converts an `f64` constant into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize representable in scalar type")
}

/// Converts `T` back to `f64` (reporting, serialization).
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// A tolerance of `x`, but never below `64 * eps` of the scalar type.
#[inline]
pub fn tol<T: Real>(x: f64) -> T {
    let floor = T::default_epsilon() * lit(64.0);
    let t = lit::<T>(x);
    if t < floor {
        floor
    } else {
        t
    }
}

/// Modulus of a complex number.
#[inline]
pub fn cabs<T: Real>(z: Cplx<T>) -> T {
    z.re.hypot(z.im)
}

#[inline]
pub fn cinv<T: Real>(z: Cplx<T>) -> Cplx<T> {
    let d = z.re * z.re + z.im * z.im;
    Complex::new(z.re / d, -z.im / d)
}

#[inline]
pub fn creal<T: Real>(x: T) -> Cplx<T> {
    Complex::new(x, T::zero())
}
