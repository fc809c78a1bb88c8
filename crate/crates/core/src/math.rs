//! Scalar Gaussian numerics shared by the quantizers, detectors and the
//! threshold designer.
//!
//! `upper_tail` is P(Z > x) for a standard normal Z (the Q-function), not the
//! CDF. Everything downstream is written in terms of the upper tail, so the
//! name is kept explicit.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::Domain(format!("probability {value} outside [0, 1]")))
        }
    }

    /// Accepts only the open interval, as needed for threshold calibration.
    pub fn open(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Probability(value))
        } else {
            Err(Error::Domain(format!("probability {value} outside (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// P(Z > x) for standard normal Z.
///
/// Evaluated through `erfc`, never as `1 - cdf`, so the result keeps full
/// relative precision deep into the upper tail.
///
/// # Panics
///
/// Panics if `x` is not finite.
pub fn upper_tail(x: f64) -> f64 {
    assert!(x.is_finite(), "upper_tail: non-finite argument {x}");
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// P(0 < Z < x), i.e. `0.5 - upper_tail(x)`, without the cancellation that
/// subtraction suffers for small `x`. Odd in `x`.
pub fn central_half(x: f64) -> f64 {
    assert!(x.is_finite(), "central_half: non-finite argument {x}");
    0.5 * libm::erf(x * FRAC_1_SQRT_2)
}

/// Inverse of [`upper_tail`]: the `x` with `upper_tail(x) = p`.
///
/// Newton iteration safeguarded by a shrinking bracket; falls back to
/// bisection whenever a Newton step leaves the bracket.
pub fn upper_tail_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "upper_tail_inverse needs p in (0, 1), got {p}"
        )));
    }
    // upper_tail(-37) == 1 and upper_tail(37) underflows to ~6e-300
    let (mut lo, mut hi) = (-37.5_f64, 37.5_f64);
    let mut x = 0.0_f64;
    for _ in 0..200 {
        let resid = upper_tail(x) - p;
        if resid == 0.0 {
            return Ok(x);
        }
        // upper_tail is decreasing: positive residual means x is too small
        if resid > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = normal_pdf(x);
        let newton = x + resid / density;
        let next = if density > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// `g(x) = x^2 / (2 pi) * exp(-x^2)`.
pub fn g_func(x: f64) -> f64 {
    assert!(x.is_finite(), "g_func: non-finite argument {x}");
    x * x / (2.0 * PI) * (-x * x).exp()
}

/// `f_q(x, t) = x / sqrt(t * sigma0^2 * ||h_q||^2 + sigma_w^2)`: a threshold
/// standardised by the sensor's observation spread at sparsity `t`.
pub fn f_func(x: f64, t: f64, h_norm_sq: f64, sigma0_sq: f64, sigma_w_sq: f64) -> Result<f64> {
    if !(sigma_w_sq > 0.0) {
        return Err(Error::Domain(format!(
            "noise variance must be positive, got {sigma_w_sq}"
        )));
    }
    if t < 0.0 || h_norm_sq < 0.0 || sigma0_sq < 0.0 {
        return Err(Error::Domain(format!(
            "f_func needs t, ||h||^2, sigma0^2 >= 0 (got {t}, {h_norm_sq}, {sigma0_sq})"
        )));
    }
    Ok(x / (t * sigma0_sq * h_norm_sq + sigma_w_sq).sqrt())
}
