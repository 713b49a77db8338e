//! Scalar abstraction shared by every numerical kernel.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point scalar the solvers are generic over (`f32`, `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + std::iter::Sum + std::fmt::LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    /// Floor applied inside logarithms so that underflowed densities stay finite.
    fn log_floor() -> Self;
}

impl Real for f64 {
    fn log_floor() -> Self {
        1e-300
    }
}

impl Real for f32 {
    fn log_floor() -> Self {
        f32::MIN_POSITIVE
    }
}

#[inline]
pub(crate) fn dot3<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm_sq3<T: Real>(a: &[T; 3]) -> T {
    dot3(a, a)
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}
