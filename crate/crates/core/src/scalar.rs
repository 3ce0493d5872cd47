//! Scalar abstraction shared by the plain-`f64` evaluation path and the
//! reverse-mode autodiff path.
//!
//! Geometry and loss kernels are written once against [`Scalar`] and
//! instantiated with `f64` (evaluation, oracles) or [`crate::autodiff::Var`]
//! (training). Inverse trig and `acosh` come in clamped flavours so that
//! roundoff just outside the mathematical domain degrades to a flat region
//! instead of a NaN; the clamped region carries zero derivative.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Threshold below which `sinh(x)/x` switches to its series expansion.
pub(crate) const SINHC_TAYLOR_CUTOFF: f64 = 1e-4;

/// Floor applied inside clamped inverse-trig derivatives to keep them finite.
pub(crate) const DERIV_FLOOR: f64 = 1e-30;

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Current numeric value (the primal for autodiff variables).
    fn value(self) -> f64;

    /// `k * self` for a compile-time-known constant `k`.
    fn scale(self, k: f64) -> Self;

    /// `self + k` for a constant `k`.
    fn shift(self, k: f64) -> Self;

    /// `max(self, floor)`; zero derivative where the floor is active.
    fn clamp_min(self, floor: f64) -> Self;

    fn recip(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;

    /// `sinh(x)/x` with the removable singularity at zero filled in.
    fn sinhc(self) -> Self;

    /// `acosh(max(self, 1))`.
    fn acosh_clamped(self) -> Self;

    /// `asin(clamp(self, -1, 1))`.
    fn asin_clamped(self) -> Self;

    /// `acos(clamp(self, -1, 1))`.
    fn acos_clamped(self) -> Self;

    /// `max(0, self)`; derivative zero at and below the hinge.
    fn relu(self) -> Self;
}

pub(crate) fn sinhc_f64(x: f64) -> f64 {
    if x.abs() < SINHC_TAYLOR_CUTOFF {
        let x2 = x * x;
        1.0 + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}

/// Derivative of `sinhc` at `x`.
pub(crate) fn sinhc_deriv_f64(x: f64) -> f64 {
    if x.abs() < SINHC_TAYLOR_CUTOFF {
        x / 3.0 + x * x * x / 30.0
    } else {
        (x * x.cosh() - x.sinh()) / (x * x)
    }
}

impl Scalar for f64 {
    fn value(self) -> f64 {
        self
    }

    fn scale(self, k: f64) -> Self {
        self * k
    }

    fn shift(self, k: f64) -> Self {
        self + k
    }

    fn clamp_min(self, floor: f64) -> Self {
        self.max(floor)
    }

    fn recip(self) -> Self {
        1.0 / self
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn ln(self) -> Self {
        f64::ln(self)
    }

    fn sinh(self) -> Self {
        f64::sinh(self)
    }

    fn cosh(self) -> Self {
        f64::cosh(self)
    }

    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    fn sinhc(self) -> Self {
        sinhc_f64(self)
    }

    fn acosh_clamped(self) -> Self {
        if self <= 1.0 {
            0.0
        } else {
            f64::acosh(self)
        }
    }

    fn asin_clamped(self) -> Self {
        f64::asin(self.clamp(-1.0, 1.0))
    }

    fn acos_clamped(self) -> Self {
        f64::acos(self.clamp(-1.0, 1.0))
    }

    fn relu(self) -> Self {
        self.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinhc_limits() {
        assert_eq!(sinhc_f64(0.0), 1.0);
        assert!((sinhc_f64(1.0) - 1.0f64.sinh()).abs() < 1e-15);
        // Series and direct formula agree around the cutoff.
        for &x in &[5e-5, 1e-4, 2e-4, 1e-3] {
            let direct = x.sinh() / x;
            assert!((sinhc_f64(x) - direct).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn clamped_trig_is_total() {
        assert_eq!(2.0f64.asin_clamped(), std::f64::consts::FRAC_PI_2);
        assert_eq!((-2.0f64).acos_clamped(), std::f64::consts::PI);
        assert_eq!(0.5f64.acosh_clamped(), 0.0);
        assert!(f64::INFINITY.asin_clamped().is_finite());
    }
}
