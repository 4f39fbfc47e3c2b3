//! Reference moments by direct quadrature of exact densities.
//!
//! The densities here are written from first principles (conditional
//! Gaussian factorizations), not from the closed-form posterior code.

use serde::Serialize;

use super::quadrature::{integrate_with_breaks, QuadratureResult};
use crate::error::{Error, Result};
use crate::pair_inverse::InverseMarginals;
use crate::pair_max::{BivariatePrior, MaxPrior, MomentPair};
use crate::scalar::{log_normal_pdf, log_std_cdf, Gaussian1};

const WINDOW: f64 = 12.0;
const OFFSETS: [f64; 9] = [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0];
const ABS_TOL: f64 = 1e-13;
const REL_TOL: f64 = 1e-12;
/// Largest accepted quadrature error estimate on a normalized density.
pub const MAX_ERROR: f64 = 1e-8;
const EDGE_REL: f64 = 1e-10;

/// Raw moments of a density and the centered moments derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadMoments {
    pub m0: QuadratureResult<f64>,
    pub m1: QuadratureResult<f64>,
    pub m2: QuadratureResult<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl QuadMoments {
    pub fn moment_pair(&self) -> Result<MomentPair> {
        MomentPair::new(self.mean, self.variance)
    }
}

fn sorted_breaks(mut pts: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    pts.retain(|x| x.is_finite() && *x > lo && *x < hi);
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Integrates `exp(log_f)` and its first two moments over the partition.
fn log_density_moments<F>(log_f: F, breaks: &[f64], center: f64) -> Result<QuadMoments>
where
    F: Fn(f64) -> f64,
{
    let lo = breaks[0];
    let hi = *breaks.last().expect("non-empty");
    let probe: Vec<f64> = {
        let mut p = breaks.to_vec();
        p.extend((1..64).map(|i| lo + (hi - lo) * i as f64 / 64.0));
        p
    };
    let offset = probe
        .iter()
        .map(|&x| log_f(x))
        .fold(f64::NEG_INFINITY, f64::max);
    if !offset.is_finite() {
        return Err(Error::QuadratureNotConverged(
            "density vanishes or overflows across the window".into(),
        ));
    }
    let peak = 1.0;
    for x in [lo, hi] {
        if (log_f(x) - offset).exp() > EDGE_REL * peak {
            return Err(Error::QuadratureNotConverged(format!(
                "density not negligible at window edge {x}"
            )));
        }
    }
    // lengths in units of the window scale keep the three components comparable
    let unit = (hi - lo) / (2.0 * WINDOW);
    let r = integrate_with_breaks(
        |x| {
            let f = (log_f(x) - offset).exp();
            let d = (x - center) / unit;
            [f, d * f, d * d * f]
        },
        breaks,
        ABS_TOL,
        REL_TOL,
    )?;
    let [z, u1, u2] = r.value;
    let (c1, c2) = (u1 * unit, u2 * unit * unit);
    if !(z > 0.0) {
        return Err(Error::QuadratureNotConverged("zero total mass".into()));
    }
    let err = r.abs_error_estimate / z;
    if err > MAX_ERROR {
        return Err(Error::QuadratureNotConverged(format!(
            "relative error estimate {err:e} above {MAX_ERROR:e}"
        )));
    }
    let mean_c = c1 / z;
    let variance = c2 / z - mean_c * mean_c;
    let mean = center + mean_c;
    let scale = offset.exp();
    let e = r.abs_error_estimate;
    let wrap = |v: f64, err: f64| QuadratureResult {
        value: v * scale,
        abs_error_estimate: err * scale,
        evaluations: r.evaluations,
    };
    let c = center.abs();
    Ok(QuadMoments {
        m0: wrap(z, e),
        m1: wrap(c1 + center * z, e * (unit + c)),
        m2: wrap(
            c2 + 2.0 * center * c1 + center * center * z,
            e * (unit + c) * (unit + c),
        ),
        mean,
        variance,
    })
}

/// Moments of a nonnegative density over `hint.mean ± 12 hint.sd`.
///
/// Fails when the density is not negligible at the window edges or the error
/// estimate exceeds [`MAX_ERROR`].
pub fn quad_moments_1d<F>(density: F, hint: &MomentPair) -> Result<QuadMoments>
where
    F: Fn(f64) -> f64,
{
    let (c, s) = (hint.mean(), hint.std_dev());
    let breaks: Vec<f64> = (-24..=24).map(|i| c + s * i as f64 * 0.5).collect();
    log_density_moments(|x| density(x).ln(), &breaks, c)
}

fn product_or_marginal(x: Gaussian1, mprior: &MaxPrior) -> (f64, f64) {
    match mprior {
        MaxPrior::Gaussian(g) => {
            let var = 1.0 / (x.precision() + g.precision());
            (var * (x.mean() * x.precision() + g.mean() * g.precision()), var)
        }
        MaxPrior::Uninformative => (x.mean(), x.variance()),
    }
}

/// Log density of `max(x₁, x₂)` under the prior, from the factorization
/// `p(x_i = m) · P(x_j < m | x_i = m)`.
pub fn log_max_density(prior: &BivariatePrior, m: f64) -> f64 {
    let rho = prior.rho();
    let mut terms = [0.0; 2];
    for (i, t) in terms.iter_mut().enumerate() {
        let j = 1 - i;
        let cond_mean = prior.mean(j) + rho * prior.sigma(j) / prior.sigma(i) * (m - prior.mean(i));
        let cond_sd = prior.sigma(j) * ((1.0 - rho) * (1.0 + rho)).sqrt();
        *t = log_normal_pdf(m, prior.mean(i), prior.sigma(i).powi(2))
            + log_std_cdf((m - cond_mean) / cond_sd);
    }
    let top = terms[0].max(terms[1]);
    top + ((terms[0] - top).exp() + (terms[1] - top).exp()).ln()
}

fn log_mprior(mprior: &MaxPrior, m: f64) -> f64 {
    match mprior {
        MaxPrior::Gaussian(g) => g.log_pdf(m),
        MaxPrior::Uninformative => 0.0,
    }
}

/// Posterior moments of the max of two correlated Gaussians by quadrature.
pub fn forward_quadrature_moments(prior: &BivariatePrior, mprior: &MaxPrior) -> Result<QuadMoments> {
    let mut pts = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..2 {
        let (c, v) = product_or_marginal(prior.marginal(i), mprior);
        let s = v.sqrt();
        lo = lo.min(c - (WINDOW + 2.0) * s);
        hi = hi.max(c + (WINDOW + 2.0) * s);
        pts.extend(OFFSETS.iter().map(|o| c + o * s));
    }
    let breaks = sorted_breaks(pts, lo, hi);
    let center = 0.5 * (lo + hi);
    log_density_moments(
        |m| log_max_density(prior, m) + log_mprior(mprior, m),
        &breaks,
        center,
    )
}

fn bvn_log_pdf(prior: &BivariatePrior, x1: f64, x2: f64) -> f64 {
    // x₁ marginal times x₂ | x₁
    let rho = prior.rho();
    let cond_mean = prior.mean(1) + rho * prior.sigma(1) / prior.sigma(0) * (x1 - prior.mean(0));
    let cond_var = prior.sigma(1).powi(2) * (1.0 - rho) * (1.0 + rho);
    log_normal_pdf(x1, prior.mean(0), prior.sigma(0).powi(2)) + log_normal_pdf(x2, cond_mean, cond_var)
}

/// Window covering the posterior of `x_i` in both half-planes.
fn inverse_window(prior: &BivariatePrior, g: &Gaussian1, i: usize) -> (f64, f64, Vec<f64>) {
    let j = 1 - i;
    let w = WINDOW + 2.0;
    let (ci, vi) = product_or_marginal(prior.marginal(i), &MaxPrior::Gaussian(*g));
    let (cj, vj) = product_or_marginal(prior.marginal(j), &MaxPrior::Gaussian(*g));
    let (si, sj) = (vi.sqrt(), vj.sqrt());
    let rho = prior.rho();
    let slope = rho * prior.sigma(i) / prior.sigma(j);
    let cond_sd = prior.sigma(i) * ((1.0 - rho) * (1.0 + rho)).sqrt();
    let at = |xj: f64| prior.mean(i) + slope * (xj - prior.mean(j));
    let (a, b) = (at(cj - w * sj), at(cj + w * sj));
    let lo = (ci - w * si).min(a.min(b) - w * cond_sd);
    let hi = (ci + w * si).max(cj + w * sj);
    let mut pts: Vec<f64> = OFFSETS.iter().map(|o| ci + o * si).collect();
    pts.extend(OFFSETS.iter().map(|o| cj + o * sj));
    pts.extend(OFFSETS.iter().map(|o| at(cj) + o * cond_sd));
    (lo, hi, pts)
}

/// Posterior marginal moments of `(x₁, x₂)` by nested 2-D quadrature.
pub fn inverse_quadrature_moments(prior: &BivariatePrior, g: &Gaussian1) -> Result<InverseMarginals> {
    let (lo1, hi1, p1) = inverse_window(prior, g, 0);
    let (lo2, hi2, p2) = inverse_window(prior, g, 1);
    let outer = sorted_breaks(p1, lo1, hi1);
    let inner_base = sorted_breaks(p2, lo2, hi2);
    let (c1, c2) = (0.5 * (lo1 + hi1), 0.5 * (lo2 + hi2));
    let log_f = |x1: f64, x2: f64| g.log_pdf(x1.max(x2)) + bvn_log_pdf(prior, x1, x2);
    let mut offset = f64::NEG_INFINITY;
    for &a in &outer {
        for &b in &inner_base {
            offset = offset.max(log_f(a, b));
        }
    }
    if !offset.is_finite() {
        return Err(Error::QuadratureNotConverged("density vanishes across the window".into()));
    }
    let mut inner_err: Option<Error> = None;
    let r = integrate_with_breaks(
        |x1| {
            let mut br = inner_base.clone();
            if x1 > lo2 && x1 < hi2 {
                br.push(x1);
                br.sort_by(f64::total_cmp);
                br.dedup();
            }
            match integrate_with_breaks(
                |x2| {
                    let f = (log_f(x1, x2) - offset).exp();
                    let d = x2 - c2;
                    [f, d * f, d * d * f]
                },
                &br,
                ABS_TOL * 1e-2,
                REL_TOL,
            ) {
                Ok(inner) => {
                    let [i0, i1, i2] = inner.value;
                    let d = x1 - c1;
                    [i0, d * i0, d * d * i0, i1, i2]
                }
                Err(e) => {
                    inner_err.get_or_insert(e);
                    [f64::NAN; 5]
                }
            }
        },
        &outer,
        ABS_TOL,
        REL_TOL,
    );
    if let Some(e) = inner_err {
        return Err(e);
    }
    let r = r?;
    let [z, a1, a2, b1, b2] = r.value;
    if r.abs_error_estimate / z > MAX_ERROR {
        return Err(Error::QuadratureNotConverged(format!(
            "relative error estimate {:e} above {MAX_ERROR:e}",
            r.abs_error_estimate / z
        )));
    }
    let (ma, mb) = (a1 / z, b1 / z);
    Ok(InverseMarginals {
        x1: MomentPair::new(c1 + ma, a2 / z - ma * ma)?,
        x2: MomentPair::new(c2 + mb, b2 / z - mb * mb)?,
        perturbed: false,
    })
}

/// Exact posterior over the max of independent Gaussians, normalized by quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct UncorrelatedMax {
    priors: Vec<Gaussian1>,
    mprior: MaxPrior,
    log_norm: f64,
    moments: QuadMoments,
}

impl UncorrelatedMax {
    pub fn new(priors: &[Gaussian1], mprior: &MaxPrior) -> Result<Self> {
        if priors.is_empty() {
            return Err(Error::Dimension("need at least one variable".into()));
        }
        let mut me = UncorrelatedMax {
            priors: priors.to_vec(),
            mprior: *mprior,
            log_norm: 0.0,
            moments: QuadMoments {
                m0: QuadratureResult {
                    value: 1.0,
                    abs_error_estimate: 0.0,
                    evaluations: 0,
                },
                m1: QuadratureResult {
                    value: 0.0,
                    abs_error_estimate: 0.0,
                    evaluations: 0,
                },
                m2: QuadratureResult {
                    value: 0.0,
                    abs_error_estimate: 0.0,
                    evaluations: 0,
                },
                mean: 0.0,
                variance: 0.0,
            },
        };
        // the max exceeds every x_i, so its mass sits above the largest lower tail
        let lo_lik = priors
            .iter()
            .map(|g| g.mean() - WINDOW * g.std_dev())
            .fold(f64::NEG_INFINITY, f64::max);
        let hi_lik = priors
            .iter()
            .map(|g| g.mean() + WINDOW * g.std_dev())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut pts: Vec<f64> = priors
            .iter()
            .flat_map(|g| OFFSETS.iter().map(move |o| g.mean() + o * g.std_dev()))
            .collect();
        let (mut lo, mut hi) = (lo_lik, hi_lik);
        if let MaxPrior::Gaussian(g) = mprior {
            pts.extend(OFFSETS.iter().map(|o| g.mean() + o * g.std_dev()));
            lo = lo.min(g.mean() - WINDOW * g.std_dev());
            hi = hi.max(g.mean() + WINDOW * g.std_dev());
        }
        let fine = 32;
        pts.extend((1..fine).map(|i| lo + (hi - lo) * i as f64 / fine as f64));
        let breaks = sorted_breaks(pts, lo, hi);
        let center = priors.iter().map(|g| g.mean()).sum::<f64>() / priors.len() as f64;
        let moments = log_density_moments(|m| me.log_unnormalized(m), &breaks, center)?;
        me.log_norm = moments.m0.value.ln();
        me.moments = moments;
        Ok(me)
    }

    fn log_unnormalized(&self, m: f64) -> f64 {
        let cdfs: Vec<f64> = self
            .priors
            .iter()
            .map(|g| log_std_cdf((m - g.mean()) / g.std_dev()))
            .collect();
        let total: f64 = cdfs.iter().sum();
        let terms: Vec<f64> = self
            .priors
            .iter()
            .zip(&cdfs)
            .map(|(g, c)| g.log_pdf(m) + (total - c))
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lik = if top.is_finite() {
            top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
        } else {
            top
        };
        lik + log_mprior(&self.mprior, m)
    }

    pub fn density(&self, m: f64) -> f64 {
        (self.log_unnormalized(m) - self.log_norm).exp()
    }

    pub fn moments(&self) -> &QuadMoments {
        &self.moments
    }
}

/// Normalized exact density of the max of independent Gaussians under the max belief.
pub fn exact_uncorrelated_max_density(priors: &[Gaussian1], mprior: &MaxPrior, m: f64) -> Result<f64> {
    Ok(UncorrelatedMax::new(priors, mprior)?.density(m))
}
