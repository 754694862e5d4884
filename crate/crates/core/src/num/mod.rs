//! Scalar foundation: the [`Real`] abstraction over `f64` and the
//! double-double type [`Dd`], plus the complex wrapper [`Cplx`].
//!
//! Everything downstream is written against `Real` so the series kernels can
//! run either in ordinary hardware floats (~16 digits) or in double-double
//! (~32 digits) for identity checks that cancel heavily.

mod cplx;
mod dd;

pub use cplx::Cplx;
pub use dd::Dd;

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Minimal real-scalar interface used by the series kernels.
pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
    /// Unit roundoff scale of the representation.
    fn eps() -> Self;

    fn from_i64(n: i64) -> Self {
        Self::from_f64(n as f64)
    }

    /// Integer power by binary exponentiation; negative exponents divide.
    /// (Named to avoid colliding with the inherent `f64::powi`.)
    fn ipow(self, n: i64) -> Self {
        if n < 0 {
            return Self::ONE / self.ipow(-n);
        }
        let mut base = self;
        let mut acc = Self::ONE;
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Complex number over `f64`, the workhorse type outside the generic kernels.
pub type C64 = Cplx<f64>;

/// Complex double-double, used on the extended-precision path.
pub type CDd = Cplx<Dd>;
