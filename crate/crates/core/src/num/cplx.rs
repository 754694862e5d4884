//! Complex numbers over any [`Real`] scalar.

use super::Real;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cplx<T> {
    pub re: T,
    pub im: T,
}

impl<T: Real> Cplx<T> {
    pub const fn new(re: T, im: T) -> Self {
        Cplx { re, im }
    }

    pub fn real(re: T) -> Self {
        Cplx { re, im: T::ZERO }
    }

    pub fn zero() -> Self {
        Cplx { re: T::ZERO, im: T::ZERO }
    }

    pub fn one() -> Self {
        Cplx { re: T::ONE, im: T::ZERO }
    }

    pub fn from_f64s(re: f64, im: f64) -> Self {
        Cplx { re: T::from_f64(re), im: T::from_f64(im) }
    }

    pub fn conj(self) -> Self {
        Cplx { re: self.re, im: -self.im }
    }

    pub fn norm_sqr(self) -> T {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Cplx { re: self.re * s, im: self.im * s }
    }

    pub fn inv(self) -> Self {
        let d = self.norm_sqr();
        Cplx { re: self.re / d, im: -self.im / d }
    }

    /// Principal square root (branch cut on the negative real axis).
    pub fn sqrt(self) -> Self {
        let r = self.abs();
        let two = T::from_f64(2.0);
        let u = ((r + self.re) / two).sqrt();
        let v = ((r - self.re) / two).sqrt();
        if self.im < T::ZERO {
            Cplx { re: u, im: -v }
        } else {
            Cplx { re: u, im: v }
        }
    }

    pub fn powi(self, n: i64) -> Self {
        if n < 0 {
            return self.powi(-n).inv();
        }
        let mut base = self;
        let mut acc = Self::one();
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

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn to_c64(self) -> Cplx<f64> {
        Cplx { re: self.re.to_f64(), im: self.im.to_f64() }
    }
}

impl<T: Real> Add for Cplx<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Cplx { re: self.re + rhs.re, im: self.im + rhs.im }
    }
}

impl<T: Real> Sub for Cplx<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Cplx { re: self.re - rhs.re, im: self.im - rhs.im }
    }
}

impl<T: Real> Mul for Cplx<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Cplx {
            re: self.re * rhs.re - self.im * rhs.im,
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }
}

impl<T: Real> Div for Cplx<T> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self * rhs.inv()
    }
}

impl<T: Real> Neg for Cplx<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Cplx { re: -self.re, im: -self.im }
    }
}

impl<T: Real> fmt::Display for Cplx<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{:+?}i", self.re, self.im)
    }
}
