//! Thin wrappers over `libm` so the crate builds without `std`.

pub(crate) use core::f64::consts::{PI, TAU};

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}

#[inline]
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub(crate) fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub(crate) fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Folds an angle into `[0, π)`.
pub fn fold_angle(theta: f64) -> f64 {
    let t = theta - PI * floor(theta / PI);
    if (0.0..PI).contains(&t) {
        t
    } else {
        // rounding at the upper edge
        0.0
    }
}

/// Shortest distance between two orientations modulo π, in `[0, π/2]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    // |a - b| keeps the result symmetric to the last bit
    let d = fold_angle((a - b).abs());
    if d > PI - d {
        PI - d
    } else {
        d
    }
}

/// Logistic function, evaluated without overflow for either sign.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}
