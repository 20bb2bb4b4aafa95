//! Blob parameterizations.
//!
//! A blob is either an oriented ellipse `(cx, cy, a, b, theta)` or a 2D
//! Gaussian `(mu, sigma)`. The two forms are tied together by a confidence
//! level `p`: the ellipse is the level set `d_M = chi2_2(p)` of the Gaussian.
//!
//! All coordinates are normalized to the unit square. Ellipses reported by
//! [`gaussian_to_ellipse`] are canonical: `a >= b`, and `theta` is the
//! orientation of the major axis folded into `[0, π)`.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math::{self, PI};
use crate::{Error, Result};

/// Default confidence level tying ellipses to Gaussians.
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Default minimum covariance eigenvalue accepted by [`validate_gaussian`].
pub const DEFAULT_MIN_EIG: f64 = 1e-5;

/// Absolute eigenvalue gap below which a covariance is treated as isotropic.
pub const ISOTROPIC_TOLERANCE: f64 = 1e-12;

/// Absolute tolerance on `sigma[0][1] - sigma[1][0]`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Probability mass enclosed by a confidence ellipse, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p < 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::Domain("confidence level must lie in (0, 1)"))
        }
    }

    /// The level whose 2-DoF chi-square quantile is `q`.
    pub fn from_quantile(q: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Domain("chi-square quantile must be positive and finite"));
        }
        Self::new(-math::expm1(-q / 2.0))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Shorthand for [`chi2_quantile_2dof`].
    #[inline]
    pub fn quantile(self) -> f64 {
        chi2_quantile_2dof(self)
    }
}

impl Default for ConfidenceLevel {
    fn default() -> Self {
        Self(DEFAULT_CONFIDENCE)
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<ConfidenceLevel> for f64 {
    fn from(p: ConfidenceLevel) -> f64 {
        p.0
    }
}

/// Quantile of the chi-square distribution with two degrees of freedom.
///
/// The 2-DoF chi-square CDF is `1 - exp(-q/2)`, so the quantile has the
/// closed form `-2 ln(1 - p)`.
pub fn chi2_quantile_2dof(p: ConfidenceLevel) -> f64 {
    -2.0 * math::ln_1p(-p.0)
}

/// Oriented ellipse form of a blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEllipse")]
pub struct BlobEllipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

#[derive(Deserialize)]
struct RawEllipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl TryFrom<RawEllipse> for BlobEllipse {
    type Error = Error;

    fn try_from(r: RawEllipse) -> Result<Self> {
        BlobEllipse::new(r.cx, r.cy, r.a, r.b, r.theta)
    }
}

impl BlobEllipse {
    /// Builds an ellipse, folding `theta` into `[0, π)`.
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::Validation("ellipse center must be finite".into()));
        }
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(Error::Validation("ellipse semi-axes must be positive and finite".into()));
        }
        if !theta.is_finite() {
            return Err(Error::Validation("ellipse orientation must be finite".into()));
        }
        Ok(Self {
            cx,
            cy,
            a,
            b,
            theta: math::fold_angle(theta),
        })
    }

    /// Same ellipse with `a >= b` and `theta` on the major axis.
    ///
    /// Circles (axes equal to 1e-12 relative) get `theta = 0`.
    pub fn canonical(&self) -> Self {
        let (mut a, mut b, mut theta) = (self.a, self.b, self.theta);
        if b > a {
            core::mem::swap(&mut a, &mut b);
            theta = math::fold_angle(theta + PI / 2.0);
        }
        if a - b <= ISOTROPIC_TOLERANCE * a {
            theta = 0.0;
        }
        Self {
            cx: self.cx,
            cy: self.cy,
            a,
            b,
            theta,
        }
    }

    /// Enclosed area `π a b` in normalized units.
    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }

    /// Whether normalized point `(x, y)` lies inside or on the ellipse.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = (math::sin(self.theta), math::cos(self.theta));
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.a) * (u / self.a) + (v / self.b) * (v / self.b) <= 1.0
    }
}

impl fmt::Display for BlobEllipse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ellipse(c=({}, {}), a={}, b={}, theta={})",
            self.cx, self.cy, self.a, self.b, self.theta
        )
    }
}

/// Gaussian form of a blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian")]
pub struct BlobGaussian {
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}

#[derive(Deserialize)]
struct RawGaussian {
    mu: [f64; 2],
    sigma: [[f64; 2]; 2],
}

impl TryFrom<RawGaussian> for BlobGaussian {
    type Error = Error;

    fn try_from(r: RawGaussian) -> Result<Self> {
        BlobGaussian::new(r.mu, r.sigma)
    }
}

/// Eigen-decomposition of a symmetric 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    /// Larger eigenvalue.
    pub major: f64,
    /// Smaller eigenvalue.
    pub minor: f64,
    /// Orientation of the major eigenvector in `[0, π)`; zero when isotropic.
    pub angle: f64,
}

/// Eigenvalues and major-axis orientation of `[[xx, xy], [xy, yy]]`.
pub fn symmetric_eigen(xx: f64, xy: f64, yy: f64) -> Eigen2 {
    let mean = 0.5 * (xx + yy);
    let half_diff = 0.5 * (xx - yy);
    let radius = math::hypot(half_diff, xy);
    let major = mean + radius;
    let det = xx * yy - xy * xy;
    // det / major avoids cancellation in mean - radius for elongated blobs
    let minor = if major > 0.0 && det > 0.0 {
        det / major
    } else {
        mean - radius
    };
    let angle = if 2.0 * radius <= ISOTROPIC_TOLERANCE {
        0.0
    } else {
        math::fold_angle(0.5 * math::atan2(2.0 * xy, xx - yy))
    };
    Eigen2 {
        major,
        minor,
        angle,
    }
}

impl BlobGaussian {
    /// Builds a Gaussian after checking symmetry and positive definiteness.
    pub fn new(mu: [f64; 2], sigma: [[f64; 2]; 2]) -> Result<Self> {
        let g = Self { mu, sigma };
        if !(mu[0].is_finite() && mu[1].is_finite()) || sigma.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("gaussian parameters must be finite".into()));
        }
        if (sigma[0][1] - sigma[1][0]).abs() > SYMMETRY_TOLERANCE {
            return Err(Error::Validation("covariance must be symmetric".into()));
        }
        if g.eigen().minor <= 0.0 {
            return Err(Error::Degenerate("covariance is not positive definite"));
        }
        Ok(g)
    }

    pub fn determinant(&self) -> f64 {
        self.sigma[0][0] * self.sigma[1][1] - self.sigma[0][1] * self.sigma[1][0]
    }

    pub fn eigen(&self) -> Eigen2 {
        let s = &self.sigma;
        symmetric_eigen(s[0][0], 0.5 * (s[0][1] + s[1][0]), s[1][1])
    }

    /// Inverse covariance as `(xx, xy, yy)`.
    pub fn precision(&self) -> Result<(f64, f64, f64)> {
        let s = &self.sigma;
        let det = self.determinant();
        if !(det > 0.0 && det.is_finite() && s[0][0] > 0.0) {
            return Err(Error::Degenerate("covariance is singular"));
        }
        let xy = 0.5 * (s[0][1] + s[1][0]);
        Ok((s[1][1] / det, -xy / det, s[0][0] / det))
    }

    /// Squared Mahalanobis distance from the mean to `(x, y)`.
    pub fn mahalanobis(&self, x: f64, y: f64) -> Result<f64> {
        let (pxx, pxy, pyy) = self.precision()?;
        Ok(quadratic_form(pxx, pxy, pyy, x - self.mu[0], y - self.mu[1]))
    }

    /// Translates the mean.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            mu: [self.mu[0] + dx, self.mu[1] + dy],
            sigma: self.sigma,
        }
    }
}

#[inline]
pub(crate) fn quadratic_form(pxx: f64, pxy: f64, pyy: f64, dx: f64, dy: f64) -> f64 {
    let d = pxx * dx * dx + 2.0 * pxy * dx * dy + pyy * dy * dy;
    // Rounding can leave tiny negative values for PD matrices near the mean.
    if d < 0.0 {
        0.0
    } else {
        d
    }
}

/// Gaussian whose `p`-confidence ellipse is `e`.
pub fn ellipse_to_gaussian(e: &BlobEllipse, p: ConfidenceLevel) -> BlobGaussian {
    let q = chi2_quantile_2dof(p);
    let (s, c) = (math::sin(e.theta), math::cos(e.theta));
    let (a2, b2) = (e.a * e.a, e.b * e.b);
    let xx = (a2 * c * c + b2 * s * s) / q;
    let yy = (a2 * s * s + b2 * c * c) / q;
    let xy = (a2 - b2) * c * s / q;
    BlobGaussian {
        mu: [e.cx, e.cy],
        sigma: [[xx, xy], [xy, yy]],
    }
}

/// Canonical `p`-confidence ellipse of `g`.
pub fn gaussian_to_ellipse(g: &BlobGaussian, p: ConfidenceLevel) -> Result<BlobEllipse> {
    if (g.sigma[0][1] - g.sigma[1][0]).abs() > SYMMETRY_TOLERANCE {
        return Err(Error::Degenerate("covariance is not symmetric"));
    }
    let eig = g.eigen();
    if !(eig.minor > 0.0 && eig.major.is_finite()) {
        return Err(Error::Degenerate("covariance is not positive definite"));
    }
    let q = chi2_quantile_2dof(p);
    Ok(BlobEllipse {
        cx: g.mu[0],
        cy: g.mu[1],
        a: math::sqrt(eig.major * q),
        b: math::sqrt(eig.minor * q),
        theta: eig.angle,
    })
}

/// Why [`validate_gaussian`] rejected a covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaussianRejection {
    #[serde(rename = "non-finite")]
    NonFinite,
    #[serde(rename = "asymmetric")]
    Asymmetric,
    #[serde(rename = "ill-conditioned")]
    IllConditioned,
}

impl GaussianRejection {
    pub fn as_str(self) -> &'static str {
        match self {
            GaussianRejection::NonFinite => "non-finite",
            GaussianRejection::Asymmetric => "asymmetric",
            GaussianRejection::IllConditioned => "ill-conditioned",
        }
    }
}

impl fmt::Display for GaussianRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Accepts `g` iff it is finite, symmetric and its smallest eigenvalue is at
/// least `min_eig`.
pub fn validate_gaussian(g: &BlobGaussian, min_eig: f64) -> core::result::Result<(), GaussianRejection> {
    if g.mu.iter().chain(g.sigma.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(GaussianRejection::NonFinite);
    }
    if (g.sigma[0][1] - g.sigma[1][0]).abs() > SYMMETRY_TOLERANCE {
        return Err(GaussianRejection::Asymmetric);
    }
    if g.eigen().minor < min_eig {
        return Err(GaussianRejection::IllConditioned);
    }
    Ok(())
}
