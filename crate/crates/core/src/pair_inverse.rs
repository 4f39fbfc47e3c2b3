//! Inverse problem for two correlated Gaussians: beliefs over `(x₁, x₂)`
//! after observing a Gaussian belief over their max.
//!
//! The posterior is the prior restricted to each half-plane `x_i > x_j` and
//! reweighted by the max belief evaluated at `x_i`. Only marginal moments are
//! matched; no posterior correlation is produced.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pair_max::{
    branch_moments, forward_aux, BivariatePrior, ForwardAux, MaxPrior, MomentPair, RHO_EPS,
};
use crate::scalar::{mills_ratio_inv, Gaussian1};

/// Relative threshold on `|σ₂ - ρσ₁| / σ₂` below which the factorization is singular.
pub const SINGULAR_REL: f64 = 1e-9;
/// Correlation offset used to step off the singular configuration.
pub const SINGULAR_RHO_STEP: f64 = 1e-7;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Moment-matched posterior marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseMarginals {
    pub x1: MomentPair,
    pub x2: MomentPair,
    /// True when either marginal was evaluated at a correlation nudged off
    /// the singular configuration `σ_j = ρσ_i`.
    pub perturbed: bool,
}

/// Constants of the `x₂ > x₁` branch of the `x₁` marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseAux {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub f: f64,
    pub h: f64,
}

/// Constants for the `x₁` marginal. Fails when `σ₂ - ρσ₁` is below the floor.
pub fn inverse_aux(prior: &BivariatePrior, mprior: &Gaussian1) -> Result<InverseAux> {
    let aux = forward_aux(prior, &MaxPrior::Gaussian(*mprior));
    aux_constants(prior, &aux)
}

fn aux_constants(p: &BivariatePrior, aux: &ForwardAux) -> Result<InverseAux> {
    let (m1, m2) = (p.mean(0), p.mean(1));
    let (s1, s2) = (p.sigma(0), p.sigma(1));
    let rho = p.rho();
    let s = s2 - rho * s1;
    if s.abs() < SINGULAR_REL * s2 {
        return Err(Error::SingularGeometry(s.abs()));
    }
    let r = s1 / s2;
    let om = (1.0 - rho) * (1.0 + rho);
    let (mc2, vc2) = (aux.mu_c[1], aux.var_c[1]);
    let a = rho * vc2 * s1 * (1.0 - rho * r) - s1 * s1 * s2 * om;
    let b = 2.0 * rho * rho * r * r * vc2 * (mc2 - m2)
        + rho * r * (2.0 * vc2 * m1 + m2 * s1 * s1 * s2 * om / s)
        - m1 * s1 * s1 * om * s2 / s;
    let f = (s2 * m1 - rho * s1 * m2) / s;
    let h = s1 * s2 * om.sqrt() / s;
    let c = rho * rho * r * r * vc2 * vc2 * (mc2 - f)
        + s1 * s1 * om * (1.0 + rho * r) * s2 / s * (mc2 * h * h + f * vc2);
    Ok(InverseAux { a, b, c, f, h })
}

/// Per-branch first and second raw moments of `x₁`, before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BranchTerms {
    pub mean: [f64; 2],
    pub second: [f64; 2],
}

pub(crate) fn x1_terms(p: &BivariatePrior, aux: &ForwardAux) -> Result<BranchTerms> {
    let c = aux_constants(p, aux)?;
    let (e1, v1) = branch_moments(aux, 0);
    let (m1, m2) = (p.mean(0), p.mean(1));
    let (s1, s2) = (p.sigma(0), p.sigma(1));
    let rho = p.rho();
    let (mc2, vc2) = (aux.mu_c[1], aux.var_c[1]);
    let lambda = mills_ratio_inv(aux.k[1]);
    let cond_mean = m1 + rho * s1 / s2 * (mc2 - m2);
    let mean2 = cond_mean + c.a / aux.a[1] * lambda;
    let d = (1.0 + vc2 / (c.h * c.h)).sqrt();
    let centre = m1 / s1 + rho * (mc2 - m2) / s2;
    let second2 = s1 * s1 * (centre * centre + (1.0 - rho * rho) + rho * rho * vc2 / (s2 * s2))
        + (c.b / (c.h * d) - c.c / (c.h.powi(3) * d.powi(3))) * lambda;
    Ok(BranchTerms {
        mean: [e1, mean2],
        second: [e1 * e1 + v1, second2],
    })
}

/// Step `ρ` off the singular value `σ_j/σ_i`, staying inside the clamp range.
fn nudge_rho(p: &BivariatePrior) -> BivariatePrior {
    let rho = p.rho();
    let singular = p.sigma(1) / p.sigma(0);
    let limit = 1.0 - RHO_EPS;
    let away = if rho >= singular {
        rho + SINGULAR_RHO_STEP
    } else {
        rho - SINGULAR_RHO_STEP
    };
    let toward = 2.0 * rho - away;
    let chosen = if away.abs() <= limit { away } else { toward };
    p.with_rho_unchecked(chosen)
}

/// Moment-matched marginal of `x₁`, plus whether `ρ` was nudged.
fn x1_marginal(p: &BivariatePrior, g: &Gaussian1) -> Result<(MomentPair, bool)> {
    // evaluate relative to μ₁ so the second moment does not cancel
    let shift = p.mean(0);
    let mut q = p.shifted(shift);
    let gq = Gaussian1::new(g.mean() - shift, g.variance())?;
    let s = q.sigma(1) - q.rho() * q.sigma(0);
    let perturbed = s.abs() < SINGULAR_REL * q.sigma(1);
    if perturbed {
        q = nudge_rho(&q);
    }
    let aux = forward_aux(&q, &MaxPrior::Gaussian(gq));
    let t = x1_terms(&q, &aux)?;
    let [w1, w2] = aux.weights;
    let mean = w1 * t.mean[0] + w2 * t.mean[1];
    let variance = w1 * t.second[0] + w2 * t.second[1] - mean * mean;
    let floor = 1e-12 * p.sigma(0).powi(2).min(g.variance());
    if !(variance > floor) || !mean.is_finite() {
        return Err(Error::VarianceCollapse { variance, floor });
    }
    Ok((MomentPair::new(mean + shift, variance)?, perturbed))
}

/// Moment-matched posterior marginals of `x₁` and `x₂`.
///
/// With an uninformative max belief the prior marginals are returned unchanged.
pub fn inverse_moments(prior: &BivariatePrior, mprior: &MaxPrior) -> Result<InverseMarginals> {
    match mprior {
        MaxPrior::Uninformative => Ok(InverseMarginals {
            x1: prior.marginal(0).into(),
            x2: prior.marginal(1).into(),
            perturbed: false,
        }),
        MaxPrior::Gaussian(g) => {
            let (x1, p1) = x1_marginal(prior, g)?;
            let (x2, p2) = x1_marginal(&prior.swapped(), g)?;
            Ok(InverseMarginals {
                x1,
                x2,
                perturbed: p1 || p2,
            })
        }
    }
}

/// Log density of the correlated prior at `(x₁, x₂)`.
pub fn bivariate_log_pdf(prior: &BivariatePrior, x1: f64, x2: f64) -> f64 {
    let z1 = (x1 - prior.mean(0)) / prior.sigma(0);
    let z2 = (x2 - prior.mean(1)) / prior.sigma(1);
    let rho = prior.rho();
    let om = (1.0 - rho) * (1.0 + rho);
    let q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / om;
    -LN_2PI - (prior.sigma(0) * prior.sigma(1)).ln() - 0.5 * om.ln() - 0.5 * q
}

/// Normalized posterior density over `(x₁, x₂)` given a proper max belief.
pub fn inverse_density(prior: &BivariatePrior, mprior: &Gaussian1, x1: f64, x2: f64) -> f64 {
    let aux = forward_aux(prior, &MaxPrior::Gaussian(*mprior));
    inverse_density_with(prior, mprior, aux.log_z, x1, x2)
}

pub(crate) fn inverse_density_with(
    prior: &BivariatePrior,
    mprior: &Gaussian1,
    log_z: f64,
    x1: f64,
    x2: f64,
) -> f64 {
    let m = x1.max(x2);
    (mprior.log_pdf(m) + bivariate_log_pdf(prior, x1, x2) - log_z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exact::inverse_quadrature_moments;
    use proptest::prelude::*;

    fn prior(m1: f64, m2: f64, s1: f64, s2: f64, r: f64) -> BivariatePrior {
        BivariatePrior::new(m1, m2, s1, s2, r).unwrap()
    }

    fn rel(a: f64, b: f64, scale: f64) -> f64 {
        (a - b).abs() / b.abs().max(scale)
    }

    #[test]
    fn uninformative_returns_prior() {
        let p = prior(0.3, -1.2, 0.7, 2.1, 0.4);
        let r = inverse_moments(&p, &MaxPrior::Uninformative).unwrap();
        assert_eq!(r.x1, MomentPair::from(p.marginal(0)));
        assert_eq!(r.x2, MomentPair::from(p.marginal(1)));
        assert!(!r.perturbed);
    }

    #[test]
    fn wide_belief_approaches_prior() {
        let p = prior(0.3, -1.2, 0.7, 2.1, 0.4);
        let r = inverse_moments(&p, &MaxPrior::gaussian(0.0, 1e16).unwrap()).unwrap();
        assert!(rel(r.x1.mean(), 0.3, 0.7) < 1e-6);
        assert!(rel(r.x1.variance(), 0.49, 0.0) < 1e-6);
        assert!(rel(r.x2.mean(), -1.2, 2.1) < 1e-6);
        assert!(rel(r.x2.variance(), 2.1 * 2.1, 0.0) < 1e-6);
    }

    #[test]
    fn rho0_constants() {
        let p = prior(0.8, -0.4, 1.3, 0.6, 0.0);
        let g = Gaussian1::new(0.5, 0.9).unwrap();
        let c = inverse_aux(&p, &g).unwrap();
        let aux = forward_aux(&p, &MaxPrior::Gaussian(g));
        let (s1, s2, m1) = (1.3f64, 0.6f64, 0.8f64);
        // sign of A is negative on the general path
        assert!(rel(c.a, -s1 * s1 * s2, 0.0) < 1e-12);
        assert!(rel(c.b, -m1 * s1 * s1, 0.0) < 1e-12);
        let want_c = s1 * s1 * (aux.mu_c[1] * s1 * s1 + m1 * aux.var_c[1]);
        assert!(rel(c.c, want_c, 0.0) < 1e-12);
        assert_eq!(c.f, m1);
        assert_eq!(c.h, s1);
    }

    #[test]
    fn singular_geometry_is_reported_and_nudged() {
        let p = prior(0.2, 0.1, 2.0, 1.0, 0.5);
        let g = Gaussian1::new(0.4, 0.8).unwrap();
        assert!(matches!(inverse_aux(&p, &g), Err(Error::SingularGeometry(_))));
        let r = inverse_moments(&p, &MaxPrior::Gaussian(g)).unwrap();
        assert!(r.perturbed);
        let q = inverse_quadrature_moments(&p, &g).unwrap();
        assert!(rel(r.x1.mean(), q.x1.mean(), r.x1.std_dev()) < 1e-5);
        assert!(rel(r.x1.variance(), q.x1.variance(), 0.0) < 1e-5);
        assert!(rel(r.x2.mean(), q.x2.mean(), r.x2.std_dev()) < 1e-5);
        assert!(rel(r.x2.variance(), q.x2.variance(), 0.0) < 1e-5);
    }

    #[test]
    fn shares_first_branch_with_forward() {
        let p = prior(0.5, -0.2, 1.1, 0.9, -0.3);
        let mp = MaxPrior::gaussian(0.7, 1.5).unwrap();
        let aux = forward_aux(&p, &mp);
        let t = x1_terms(&p, &aux).unwrap();
        let (e1, _) = branch_moments(&aux, 0);
        assert_eq!(aux.weights[0] * t.mean[0], aux.weights[0] * e1);
    }

    #[test]
    fn fig3_configuration_quadrature() {
        let p = prior(1.0, 1.0, 1.0, 1.0, -0.5);
        let g = Gaussian1::new(1.0, 1.0).unwrap();
        let r = inverse_moments(&p, &MaxPrior::Gaussian(g)).unwrap();
        let q = inverse_quadrature_moments(&p, &g).unwrap();
        assert!(rel(r.x1.mean(), q.x1.mean(), 1.0) < 1e-8);
        assert!(rel(r.x1.variance(), q.x1.variance(), 0.0) < 1e-8);
        assert_eq!(r.x1, r.x2);
    }

    #[test]
    fn density_on_half_plane() {
        let p = prior(0.4, -0.2, 1.0, 1.5, 0.3);
        let g = Gaussian1::new(0.1, 0.6).unwrap();
        let log_z = forward_aux(&p, &MaxPrior::Gaussian(g)).log_z;
        let (x1, x2) = (0.9, -0.5);
        let want = (g.log_pdf(x1) + bivariate_log_pdf(&p, x1, x2) - log_z).exp();
        assert_eq!(inverse_density(&p, &g, x1, x2), want);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_quadrature(
            m1 in -3.0f64..3.0, m2 in -3.0f64..3.0,
            s1 in 0.3f64..3.0, s2 in 0.3f64..3.0,
            r in -0.9f64..0.9, mm in -3.0f64..3.0, vm in 0.1f64..9.0,
        ) {
            let p = prior(m1, m2, s1, s2, r);
            let g = Gaussian1::new(mm, vm).unwrap();
            let got = inverse_moments(&p, &MaxPrior::Gaussian(g)).unwrap();
            let q = inverse_quadrature_moments(&p, &g).unwrap();
            prop_assert!(rel(got.x1.mean(), q.x1.mean(), q.x1.std_dev()) < 1e-6);
            prop_assert!(rel(got.x1.variance(), q.x1.variance(), 0.0) < 1e-6);
            prop_assert!(rel(got.x2.mean(), q.x2.mean(), q.x2.std_dev()) < 1e-6);
            prop_assert!(rel(got.x2.variance(), q.x2.variance(), 0.0) < 1e-6);
        }

        #[test]
        fn index_exchange(
            m1 in -3.0f64..3.0, m2 in -3.0f64..3.0,
            s1 in 0.3f64..3.0, s2 in 0.3f64..3.0,
            r in -0.9f64..0.9, mm in -3.0f64..3.0, vm in 0.1f64..9.0,
        ) {
            let p = prior(m1, m2, s1, s2, r);
            let mp = MaxPrior::gaussian(mm, vm).unwrap();
            let a = inverse_moments(&p, &mp).unwrap();
            let b = inverse_moments(&p.swapped(), &mp).unwrap();
            prop_assert_eq!(a.x1, b.x2);
            prop_assert_eq!(a.x2, b.x1);
        }
    }
}
