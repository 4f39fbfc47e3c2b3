//! Scalar Gaussian primitives.
//!
//! Densities, distribution functions and the closed-form Gaussian integrals
//! that the pairwise max derivations are assembled from. Tail-sensitive
//! quantities (`log Φ`, `φ/Φ`) switch to a continued fraction for the
//! Mills ratio below `x = -8`, where `Φ` loses relative accuracy.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{invalid, Error, Result};

/// `1/√(2π)`
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// `ln √(2π)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const TAIL_SWITCH: f64 = -8.0;

/// A univariate Gaussian belief with strictly positive variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1 {
    mean: f64,
    variance: f64,
}

impl Gaussian1 {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(invalid("mean", format!("must be finite, got {mean}")));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(invalid(
                "variance",
                format!("must be finite and > 0, got {variance}"),
            ));
        }
        Ok(Gaussian1 { mean, variance })
    }

    pub fn standard() -> Self {
        Gaussian1 {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.variance
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        log_normal_pdf(x, self.mean, self.variance)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Mirror image `N(-mean, variance)`.
    pub fn negated(&self) -> Self {
        Gaussian1 {
            mean: -self.mean,
            variance: self.variance,
        }
    }
}

/// A Gaussian component carrying a log-scale weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedGaussian1 {
    pub log_weight: f64,
    pub component: Gaussian1,
}

/// `log N(x; mean, variance)`
#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / variance - 0.5 * variance.ln() - LN_SQRT_2PI
}

/// Standard normal density `φ(x)`.
#[inline]
pub fn std_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function `Φ(x)`, via `erfc`.
#[inline]
pub fn std_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Mills ratio `(1 - Φ(t)) / φ(t)` for `t ≥ 8`, by the Laplace continued
/// fraction `1/(t + 1/(t + 2/(t + 3/(t + …))))` evaluated with Lentz's method.
fn mills_ratio_upper(t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = t;
    let mut c = t;
    let mut d = 0.0;
    for n in 1..500 {
        let an = n as f64;
        d = t + an * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = t + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `log Φ(x)`, accurate in both tails.
pub fn log_std_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x >= TAIL_SWITCH {
        std_cdf(x).ln()
    } else {
        -0.5 * x * x - LN_SQRT_2PI + mills_ratio_upper(-x).ln()
    }
}

/// Inverse Mills ratio `φ(x) / Φ(x)`.
///
/// For `x → -∞` this behaves as `-x + 1/(-x) + …` and is evaluated through the
/// continued fraction so that neither factor underflows.
pub fn mills_ratio_inv(x: f64) -> f64 {
    if x >= TAIL_SWITCH {
        std_pdf(x) / std_cdf(x)
    } else {
        1.0 / mills_ratio_upper(-x)
    }
}

/// Product of two Gaussian densities, `N(x; a) N(x; b) = w N(x; c)`.
pub fn gaussian_product(a: Gaussian1, b: Gaussian1) -> WeightedGaussian1 {
    let pa = 1.0 / a.variance;
    let pb = 1.0 / b.variance;
    let variance = 1.0 / (pa + pb);
    let mean = (a.mean * pa + b.mean * pb) * variance;
    WeightedGaussian1 {
        log_weight: log_normal_pdf(a.mean, b.mean, a.variance + b.variance),
        component: Gaussian1 { mean, variance },
    }
}

/// Incomplete moments `∫_{-∞}^{y} t^j N(t; g) dt` for `j = 0, 1, 2`.
pub fn incomplete_moments(y: f64, g: Gaussian1) -> (f64, f64, f64) {
    let alpha = g.mean;
    let beta = g.std_dev();
    let u = (y - alpha) / beta;
    let cdf = std_cdf(u);
    let pdf = std_pdf(u);
    if pdf == 0.0 {
        // avoid inf * 0 when y is far in the right tail
        return (cdf, alpha * cdf, (alpha * alpha + beta * beta) * cdf);
    }
    let m0 = cdf;
    let m1 = alpha * cdf - beta * pdf;
    let m2 = (alpha * alpha + beta * beta) * cdf - (alpha + y) * beta * pdf;
    (m0, m1, m2)
}

/// Moments of a Gaussian smoothed by a probit factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedMoments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub z: f64,
}

/// `∫ x^j Φ((x - a)/b) N(x; α, β²) dx` for `j = 0, 1, 2`, plus the argument
/// `z = (α - a) / (b √(1 + β²/b²))`.
///
/// `b` may be negative; the signed scale keeps the closed forms valid since
/// `Φ((x - a)/b)` is then decreasing in `x`.
pub fn smoothed_cdf_moments(a: f64, b: f64, g: Gaussian1) -> Result<SmoothedMoments> {
    if b == 0.0 {
        return Err(Error::DegenerateSlope);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(invalid("a/b", "must be finite"));
    }
    let alpha = g.mean;
    let beta2 = g.variance;
    let scale = b * (1.0 + beta2 / (b * b)).sqrt();
    let z = (alpha - a) / scale;
    let cdf = std_cdf(z);
    let pdf = std_pdf(z);
    let shift = beta2 / scale;
    Ok(SmoothedMoments {
        m0: cdf,
        m1: alpha * cdf + shift * pdf,
        m2: (alpha * alpha + beta2) * cdf
            + (2.0 * alpha * shift - z * beta2 * beta2 / (b * b + beta2)) * pdf,
        z,
    })
}
