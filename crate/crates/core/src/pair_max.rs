//! Forward problem for two correlated Gaussians.
//!
//! Given `x ~ N(μ, Σ)` in two dimensions and a belief `N(μ_m, σ_m²)` over
//! `m = max(x₁, x₂)`, the posterior over `m` is a two-component mixture of
//! probit-skewed Gaussians. Each component `i` is the product of the prior
//! marginal of `x_i` with the max belief, skewed by the probability that the
//! other variable lies below it.
//!
//! All mixture weights are carried in log space and normalized with
//! log-sum-exp, so widely separated beliefs do not underflow.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{
    gaussian_product, log_normal_pdf, log_std_cdf, mills_ratio_inv, std_cdf, std_pdf, Gaussian1,
};

/// Correlations are kept inside `[-1 + RHO_EPS, 1 - RHO_EPS]`.
pub const RHO_EPS: f64 = 1e-6;

const VARIANCE_FLOOR_REL: f64 = 1e-12;

pub(crate) fn clamp_rho(rho: f64) -> (f64, bool) {
    let limit = 1.0 - RHO_EPS;
    if rho > limit {
        (limit, true)
    } else if rho < -limit {
        (-limit, true)
    } else {
        (rho, false)
    }
}

/// Correlated Gaussian prior over `(x₁, x₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariatePrior {
    mu: [f64; 2],
    sigma: [f64; 2],
    rho: f64,
    rho_clamped: bool,
}

impl BivariatePrior {
    /// Builds a prior from means, standard deviations and the correlation
    /// coefficient. `|rho| > 1 - RHO_EPS` is clamped and flagged.
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        for (name, v) in [("mu1", mu1), ("mu2", mu2)] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        for (name, v) in [("sigma1", sigma1), ("sigma2", sigma2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(rho.is_finite() && rho.abs() <= 1.0) {
            return Err(invalid("rho", format!("must lie in [-1, 1], got {rho}")));
        }
        let (rho, rho_clamped) = clamp_rho(rho);
        Ok(BivariatePrior {
            mu: [mu1, mu2],
            sigma: [sigma1, sigma2],
            rho,
            rho_clamped,
        })
    }

    pub fn from_marginals(x1: Gaussian1, x2: Gaussian1, rho: f64) -> Result<Self> {
        Self::new(x1.mean(), x2.mean(), x1.std_dev(), x2.std_dev(), rho)
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mu[i]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigma[i]
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// True when the supplied correlation was pulled back inside the valid range.
    pub fn rho_clamped(&self) -> bool {
        self.rho_clamped
    }

    pub fn marginal(&self, i: usize) -> Gaussian1 {
        Gaussian1::new(self.mu[i], self.sigma[i] * self.sigma[i])
            .expect("validated at construction")
    }

    /// Exchange the roles of `x₁` and `x₂`.
    pub fn swapped(&self) -> Self {
        BivariatePrior {
            mu: [self.mu[1], self.mu[0]],
            sigma: [self.sigma[1], self.sigma[0]],
            ..*self
        }
    }

    /// Prior over `(-x₁, -x₂)`.
    pub fn negated(&self) -> Self {
        BivariatePrior {
            mu: [-self.mu[0], -self.mu[1]],
            ..*self
        }
    }

    /// Assemble from already-validated parts; `rho` must already be clamped.
    pub(crate) fn from_parts(mu: [f64; 2], sigma: [f64; 2], rho: f64, rho_clamped: bool) -> Self {
        BivariatePrior {
            mu,
            sigma,
            rho,
            rho_clamped,
        }
    }

    pub(crate) fn with_rho_unchecked(&self, rho: f64) -> Self {
        BivariatePrior { rho, ..*self }
    }

    pub(crate) fn shifted(&self, c: f64) -> Self {
        BivariatePrior {
            mu: [self.mu[0] - c, self.mu[1] - c],
            ..*self
        }
    }

    /// `σ₁σ₂√(1-ρ²)`: the conditional scale of the probit factor.
    fn cond_scale(&self) -> f64 {
        self.sigma[0] * self.sigma[1] * ((1.0 - self.rho) * (1.0 + self.rho)).sqrt()
    }
}

/// Belief over the max: a Gaussian, or the σ_m → ∞ likelihood limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxPrior {
    Gaussian(Gaussian1),
    Uninformative,
}

impl MaxPrior {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        Ok(MaxPrior::Gaussian(Gaussian1::new(mean, variance)?))
    }

    pub fn is_proper(&self) -> bool {
        matches!(self, MaxPrior::Gaussian(_))
    }

    pub fn negated(&self) -> Self {
        match self {
            MaxPrior::Gaussian(g) => MaxPrior::Gaussian(g.negated()),
            MaxPrior::Uninformative => MaxPrior::Uninformative,
        }
    }

    fn variance(&self) -> f64 {
        match self {
            MaxPrior::Gaussian(g) => g.variance(),
            MaxPrior::Uninformative => f64::INFINITY,
        }
    }
}

/// Mean and variance of a moment-matched Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    mean: f64,
    variance: f64,
}

impl MomentPair {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(mean.is_finite() && variance.is_finite() && variance > 0.0) {
            return Err(invalid(
                "moments",
                format!("need finite mean and positive variance, got ({mean}, {variance})"),
            ));
        }
        Ok(MomentPair { mean, variance })
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

    pub fn to_gaussian(&self) -> Gaussian1 {
        Gaussian1::new(self.mean, self.variance).expect("MomentPair invariants")
    }

    pub fn negated(&self) -> Self {
        MomentPair {
            mean: -self.mean,
            variance: self.variance,
        }
    }
}

impl From<Gaussian1> for MomentPair {
    fn from(g: Gaussian1) -> Self {
        MomentPair {
            mean: g.mean(),
            variance: g.variance(),
        }
    }
}

/// Auxiliary quantities of the two-component forward posterior.
///
/// Index `i` refers to the branch in which `x_i` attains the max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForwardAux {
    /// Normalized mixture weights `w_i`.
    pub weights: [f64; 2],
    /// Probit arguments `k_i` of the branch normalizers.
    pub k: [f64; 2],
    /// `a_i = [σ₁²σ₂²(1-ρ²) + (σ_i - ρσ_j)² σ_ci²]^½`
    pub a: [f64; 2],
    /// `b_i = σ_ci (σ_i - ρσ_j)`
    pub b: [f64; 2],
    /// Mean of `N(x_i prior) · N(m belief)`, or the prior mean in the likelihood limit.
    pub mu_c: [f64; 2],
    pub var_c: [f64; 2],
    /// Log normalizer. In the likelihood limit the max-belief density factor
    /// is dropped, which leaves `log(Φ(k₁) + Φ(k₂)) = 0`.
    pub log_z: f64,
    /// `log N(μ_m; μ_i, σ_m² + σ_i²)`, zero in the likelihood limit.
    pub(crate) log_evidence: [f64; 2],
}

/// Computes the per-branch constants of the forward posterior.
pub fn forward_aux(prior: &BivariatePrior, mprior: &MaxPrior) -> ForwardAux {
    let rho = prior.rho;
    let d = prior.cond_scale();
    let mut aux = ForwardAux {
        weights: [0.0; 2],
        k: [0.0; 2],
        a: [0.0; 2],
        b: [0.0; 2],
        mu_c: [0.0; 2],
        var_c: [0.0; 2],
        log_z: 0.0,
        log_evidence: [0.0; 2],
    };
    let mut log_w = [0.0; 2];
    for i in 0..2 {
        let j = 1 - i;
        let (s_i, s_j) = (prior.sigma[i], prior.sigma[j]);
        let (m_i, m_j) = (prior.mu[i], prior.mu[j]);
        let (mu_c, var_c, log_evidence) = match mprior {
            MaxPrior::Gaussian(g) => {
                let p = gaussian_product(prior.marginal(i), *g);
                (p.component.mean(), p.component.variance(), p.log_weight)
            }
            MaxPrior::Uninformative => (m_i, s_i * s_i, 0.0),
        };
        let slope = s_i - rho * s_j;
        let a = (d * d + slope * slope * var_c).sqrt();
        // (σ_i - ρσ_j) μ_ci - σ_i μ_j + ρ σ_j μ_i, rearranged to avoid cancellation
        let k = (slope * (mu_c - m_i) + s_i * (m_i - m_j)) / a;
        aux.mu_c[i] = mu_c;
        aux.var_c[i] = var_c;
        aux.a[i] = a;
        aux.b[i] = var_c.sqrt() * slope;
        aux.k[i] = k;
        aux.log_evidence[i] = log_evidence;
        log_w[i] = log_evidence + log_std_cdf(k);
    }
    let top = log_w[0].max(log_w[1]);
    aux.log_z = top + ((log_w[0] - top).exp() + (log_w[1] - top).exp()).ln();
    for i in 0..2 {
        aux.weights[i] = (log_w[i] - aux.log_z).exp();
    }
    aux
}

/// Conditional mean and variance of branch `i` (a probit-skewed Gaussian).
pub(crate) fn branch_moments(aux: &ForwardAux, i: usize) -> (f64, f64) {
    let ratio = aux.b[i] / aux.a[i];
    let lambda = mills_ratio_inv(aux.k[i]);
    let sc = aux.var_c[i].sqrt();
    let mean = aux.mu_c[i] + sc * ratio * lambda;
    let var = aux.var_c[i] * (1.0 - ratio * ratio * lambda * (aux.k[i] + lambda));
    (mean, var)
}

fn variance_floor(prior: &BivariatePrior, mprior: &MaxPrior) -> f64 {
    let s = prior.sigma[0].max(prior.sigma[1]);
    VARIANCE_FLOOR_REL * (s * s).min(mprior.variance())
}

fn combine(aux: &ForwardAux, floor: f64) -> Result<MomentPair> {
    let (e1, v1) = branch_moments(aux, 0);
    let (e2, v2) = branch_moments(aux, 1);
    let [w1, w2] = aux.weights;
    let mean = w1 * e1 + w2 * e2;
    let variance = w1 * (v1 + (e1 - mean).powi(2)) + w2 * (v2 + (e2 - mean).powi(2));
    if !(variance > floor) || !mean.is_finite() {
        return Err(Error::VarianceCollapse { variance, floor });
    }
    Ok(MomentPair { mean, variance })
}

/// Normalized posterior density of `m = max(x₁, x₂)` under the max belief.
pub fn forward_density(prior: &BivariatePrior, mprior: &MaxPrior, m: f64) -> f64 {
    let aux = forward_aux(prior, mprior);
    forward_density_with(prior, &aux, m)
}

pub(crate) fn forward_density_with(prior: &BivariatePrior, aux: &ForwardAux, m: f64) -> f64 {
    let d = prior.cond_scale();
    let mut total = 0.0;
    for i in 0..2 {
        let j = 1 - i;
        let slope = prior.sigma[i] - prior.rho * prior.sigma[j];
        let arg = (slope * (m - prior.mu[i]) + prior.sigma[i] * (prior.mu[i] - prior.mu[j])) / d;
        let log_term = aux.log_evidence[i] - aux.log_z
            + log_normal_pdf(m, aux.mu_c[i], aux.var_c[i])
            + log_std_cdf(arg);
        total += log_term.exp();
    }
    total
}

/// First two moments of the forward posterior over the max.
pub fn forward_moments(prior: &BivariatePrior, mprior: &MaxPrior) -> Result<MomentPair> {
    let aux = forward_aux(prior, mprior);
    combine(&aux, variance_floor(prior, mprior))
}

/// Result of one likelihood-limit max step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ClarkStep {
    pub moments: MomentPair,
    /// `k = (μ₁ - μ₂)/a`; `±∞` when the difference has no spread.
    pub k: f64,
}

pub(crate) fn clark_step(prior: &BivariatePrior) -> Result<ClarkStep> {
    let [s1, s2] = prior.sigma;
    let [m1, m2] = prior.mu;
    let a = ((s1 - s2).powi(2) + 2.0 * (1.0 - prior.rho) * s1 * s2).sqrt();
    if a <= 1e-9 * s1.max(s2) {
        let (moments, k) = if m1 >= m2 {
            (prior.marginal(0).into(), f64::INFINITY)
        } else {
            (prior.marginal(1).into(), f64::NEG_INFINITY)
        };
        return Ok(ClarkStep { moments, k });
    }
    let k = (m1 - m2) / a;
    // work relative to the midpoint so the second moment does not cancel
    let c = 0.5 * (m1 + m2);
    let (d1, d2) = (m1 - c, m2 - c);
    let (p, q) = (std_cdf(k), std_cdf(-k));
    let density = std_pdf(k);
    let mean = d1 * p + d2 * q + a * density;
    let second = (d1 * d1 + s1 * s1) * p + (d2 * d2 + s2 * s2) * q + (d1 + d2) * a * density;
    let variance = second - mean * mean;
    let floor = VARIANCE_FLOOR_REL * s1.max(s2).powi(2);
    if !(variance > floor) {
        return Err(Error::VarianceCollapse { variance, floor });
    }
    Ok(ClarkStep {
        moments: MomentPair {
            mean: mean + c,
            variance,
        },
        k,
    })
}

/// Moments of the max likelihood (σ_m → ∞), Clark's closed form.
///
/// When `x₁ - x₂` has (numerically) no spread the larger-mean marginal is returned.
pub fn clark_limit_moments(prior: &BivariatePrior) -> Result<MomentPair> {
    clark_step(prior).map(|s| s.moments)
}

/// The `ρ = 0` specialization of [`forward_moments`].
pub fn forward_moments_rho0(prior: &BivariatePrior, mprior: &MaxPrior) -> Result<MomentPair> {
    if prior.rho != 0.0 {
        return Err(Error::NonzeroCorrelation(prior.rho));
    }
    let mut aux = ForwardAux {
        weights: [0.0; 2],
        k: [0.0; 2],
        a: [0.0; 2],
        b: [0.0; 2],
        mu_c: [0.0; 2],
        var_c: [0.0; 2],
        log_z: 0.0,
        log_evidence: [0.0; 2],
    };
    let mut log_w = [0.0; 2];
    for i in 0..2 {
        let j = 1 - i;
        let x_i = prior.marginal(i);
        let (mu_c, var_c, log_evidence) = match mprior {
            MaxPrior::Gaussian(g) => {
                let p = gaussian_product(x_i, *g);
                (p.component.mean(), p.component.variance(), p.log_weight)
            }
            MaxPrior::Uninformative => (x_i.mean(), x_i.variance(), 0.0),
        };
        let spread = (prior.sigma[j].powi(2) + var_c).sqrt();
        aux.k[i] = (mu_c - prior.mu[j]) / spread;
        aux.a[i] = prior.sigma[i] * spread;
        aux.b[i] = var_c.sqrt() * prior.sigma[i];
        aux.mu_c[i] = mu_c;
        aux.var_c[i] = var_c;
        aux.log_evidence[i] = log_evidence;
        log_w[i] = log_evidence + log_std_cdf(aux.k[i]);
    }
    let top = log_w[0].max(log_w[1]);
    aux.log_z = top + ((log_w[0] - top).exp() + (log_w[1] - top).exp()).ln();
    for i in 0..2 {
        aux.weights[i] = (log_w[i] - aux.log_z).exp();
    }
    combine(&aux, variance_floor(prior, mprior))
}

/// Moments of `min(x₁, x₂)` through `min(x) = -max(-x)`.
pub fn min_moments(prior: &BivariatePrior, mprior: &MaxPrior) -> Result<MomentPair> {
    forward_moments(&prior.negated(), &mprior.negated()).map(|m| m.negated())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::quadrature::integrate_with_breaks;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn prior(m1: f64, m2: f64, s1: f64, s2: f64, r: f64) -> BivariatePrior {
        BivariatePrior::new(m1, m2, s1, s2, r).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    /// Literal transcription of the mixture moment formulas (second moment
    /// minus squared mean), kept as a cross-check on the centered evaluation.
    fn literal_moments(aux: &ForwardAux) -> (f64, f64) {
        let mut mean = 0.0;
        let mut second = 0.0;
        for i in 0..2 {
            let (w, k, a, b, mu, var) = (
                aux.weights[i],
                aux.k[i],
                aux.a[i],
                aux.b[i],
                aux.mu_c[i],
                aux.var_c[i],
            );
            let sc = var.sqrt();
            let l = std_pdf(k) / std_cdf(k);
            mean += w * (mu + sc * b / a * l);
            second += w * ((mu * mu + var) + (2.0 * mu * sc * b / a - k * var * b * b / (a * a)) * l);
        }
        (mean, second - mean * mean)
    }

    fn quad_moments(p: &BivariatePrior, mp: &MaxPrior) -> [f64; 3] {
        let aux = forward_aux(p, mp);
        let lo = (p.mean(0) - 14.0 * p.sigma(0)).max(p.mean(1) - 14.0 * p.sigma(1));
        let hi = (p.mean(0) + 14.0 * p.sigma(0)).max(p.mean(1) + 14.0 * p.sigma(1));
        let mut breaks: Vec<f64> = (0..=32).map(|i| lo + (hi - lo) * i as f64 / 32.0).collect();
        breaks.dedup();
        let r = integrate_with_breaks(
            |m| {
                let f = forward_density_with(p, &aux, m);
                [f, m * f, m * m * f]
            },
            &breaks,
            1e-14,
            1e-13,
        )
        .unwrap();
        r.value
    }

    #[test]
    fn symmetric_aux() {
        let aux = forward_aux(&prior(0.0, 0.0, 1.0, 1.0, 0.0), &MaxPrior::Uninformative);
        assert_eq!(aux.weights, [0.5, 0.5]);
        assert_eq!(aux.k, [0.0, 0.0]);
        assert_eq!(aux.log_z, 0.0);
    }

    #[test]
    fn separated_aux() {
        let aux = forward_aux(&prior(100.0, 0.0, 1.0, 1.0, 0.0), &MaxPrior::Uninformative);
        assert!(aux.weights[0] > 1.0 - 1e-15);
        assert!(aux.weights[1] < 1e-300);
    }

    #[test]
    fn fig3_configuration_aux() {
        let aux = forward_aux(
            &prior(1.0, 1.0, 1.0, 1.0, -0.5),
            &MaxPrior::gaussian(1.0, 1.0).unwrap(),
        );
        assert_eq!(aux.mu_c, [1.0, 1.0]);
        assert_eq!(aux.var_c, [0.5, 0.5]);
        assert_eq!(aux.weights[0], aux.weights[1]);
        assert!((aux.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn iid_standard_moments() {
        // max of two iid N(0,1): mean 1/√π, variance 1 - 1/π
        let p = prior(0.0, 0.0, 1.0, 1.0, 0.0);
        let want_mean = 0.564_189_583_547_756_286_95;
        let want_var = 0.681_690_113_816_209_328_46;
        for m in [
            forward_moments(&p, &MaxPrior::Uninformative).unwrap(),
            clark_limit_moments(&p).unwrap(),
            forward_moments_rho0(&p, &MaxPrior::Uninformative).unwrap(),
        ] {
            assert!(close(m.mean(), want_mean, 1e-14));
            assert!(close(m.variance(), want_var, 1e-14));
        }
        let q = quad_moments(&p, &MaxPrior::Uninformative);
        assert!(close(q[1] / q[0], 1.0 / PI.sqrt(), 1e-10));
        assert!(close(q[2] / q[0] - (q[1] / q[0]).powi(2), 1.0 - 1.0 / PI, 1e-10));
    }

    #[test]
    fn separated_forward_follows_dominant_branch() {
        let p = prior(100.0, 0.0, 1.0, 1.0, 0.0);
        let mp = MaxPrior::gaussian(100.0, 1e6).unwrap();
        let m = forward_moments(&p, &mp).unwrap();
        let aux = forward_aux(&p, &mp);
        assert!(close(m.mean(), aux.mu_c[0], 1e-12));
        assert!(close(m.variance(), aux.var_c[0], 1e-10));
    }

    #[test]
    fn clark_dominant_limit() {
        let m = clark_limit_moments(&prior(50.0, 0.0, 1.5, 1.0, 0.3)).unwrap();
        assert_eq!(m.mean(), 50.0);
        assert!(close(m.variance(), 2.25, 1e-14));
    }

    #[test]
    fn clark_degenerate_difference_falls_back() {
        let p = prior(0.3, 0.1, 1.0, 1.0, 1.0);
        assert!(p.rho_clamped());
        // with rho clamped the difference still has a little spread
        assert!(clark_limit_moments(&p).is_ok());
        let exact = BivariatePrior {
            rho: 1.0,
            ..p
        };
        let m = clark_limit_moments(&exact).unwrap();
        assert_eq!((m.mean(), m.variance()), (0.3, 1.0));
    }

    #[test]
    fn rho0_requires_zero() {
        let p = prior(0.0, 1.0, 1.0, 1.0, 0.2);
        assert_eq!(
            forward_moments_rho0(&p, &MaxPrior::Uninformative),
            Err(Error::NonzeroCorrelation(0.2))
        );
    }

    #[test]
    fn rho0_matches_general_on_fig3_like_input() {
        let p = prior(1.0, 1.0, 1.0, 1.0, 0.0);
        let mp = MaxPrior::gaussian(1.0, 1.0).unwrap();
        let a = forward_moments(&p, &mp).unwrap();
        let b = forward_moments_rho0(&p, &mp).unwrap();
        assert!(close(a.mean(), b.mean(), 1e-12));
        assert!(close(a.variance(), b.variance(), 1e-12));
    }

    #[test]
    fn min_examples() {
        let p = prior(0.0, 0.0, 1.0, 1.0, 0.0);
        let m = min_moments(&p, &MaxPrior::Uninformative).unwrap();
        let mx = forward_moments(&p, &MaxPrior::Uninformative).unwrap();
        assert_eq!(m.mean(), -mx.mean());
        assert_eq!(m.variance(), mx.variance());
    }

    #[test]
    fn density_normalizes() {
        let p = prior(0.4, -0.3, 0.8, 1.6, 0.6);
        for mp in [MaxPrior::Uninformative, MaxPrior::gaussian(-0.5, 0.7).unwrap()] {
            let q = quad_moments(&p, &mp);
            assert!((q[0] - 1.0).abs() < 1e-10, "{}", q[0]);
        }
    }

    #[test]
    fn density_exchange_symmetric() {
        let p = prior(0.5, 0.5, 1.2, 1.2, 0.3);
        let mp = MaxPrior::gaussian(1.0, 2.0).unwrap();
        for m in [-2.0, -0.3, 0.5, 1.9, 4.0] {
            let a = forward_density(&p, &mp, m);
            let b = forward_density(&p.swapped(), &mp, m);
            assert!(close(a, b, 1e-14));
        }
    }

    #[test]
    fn variance_floor_ignores_wide_max_belief() {
        let p = prior(0.0, 1.0, 1.0, 1.0, 0.1);
        assert!(forward_moments(&p, &MaxPrior::gaussian(0.0, 1e16).unwrap()).is_ok());
    }

    #[test]
    fn tight_max_belief_is_not_a_collapse() {
        let p = prior(0.0, 1.0, 1.0, 1.0, 0.1);
        let m = forward_moments(&p, &MaxPrior::gaussian(0.7, 1e-14).unwrap()).unwrap();
        assert!(close(m.mean(), 0.7, 1e-6));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn centered_matches_literal(
            m1 in -3.0f64..3.0, m2 in -3.0f64..3.0,
            s1 in 0.3f64..3.0, s2 in 0.3f64..3.0,
            r in -0.9f64..0.9, mm in -3.0f64..3.0, vm in 0.1f64..9.0,
        ) {
            let p = prior(m1, m2, s1, s2, r);
            let mp = MaxPrior::gaussian(mm, vm).unwrap();
            let aux = forward_aux(&p, &mp);
            let m = forward_moments(&p, &mp).unwrap();
            let (lm, lv) = literal_moments(&aux);
            prop_assert!((m.mean() - lm).abs() <= 1e-12 * (1.0 + lm.abs()));
            prop_assert!((m.variance() - lv).abs() <= 1e-10 * lv);
        }

        #[test]
        fn weights_sum_to_one(
            m1 in -50.0f64..50.0, m2 in -50.0f64..50.0,
            s1 in 0.01f64..10.0, s2 in 0.01f64..10.0,
            r in -1.0f64..1.0, mm in -50.0f64..50.0, vm in 0.001f64..100.0,
        ) {
            let aux = forward_aux(&prior(m1, m2, s1, s2, r), &MaxPrior::gaussian(mm, vm).unwrap());
            prop_assert!((aux.weights[0] + aux.weights[1] - 1.0).abs() < 1e-12);
            prop_assert!(aux.weights.iter().all(|w| *w >= 0.0));
            prop_assert!(aux.a.iter().all(|a| *a > 0.0));
        }

        #[test]
        fn exchange_symmetry(
            m1 in -3.0f64..3.0, m2 in -3.0f64..3.0,
            s1 in 0.3f64..3.0, s2 in 0.3f64..3.0,
            r in -0.9f64..0.9, mm in -3.0f64..3.0, vm in 0.1f64..9.0,
        ) {
            let p = prior(m1, m2, s1, s2, r);
            let mp = MaxPrior::gaussian(mm, vm).unwrap();
            let a = forward_moments(&p, &mp).unwrap();
            let b = forward_moments(&p.swapped(), &mp).unwrap();
            prop_assert!((a.mean() - b.mean()).abs() <= 1e-12 * a.mean().abs().max(a.std_dev()));
            prop_assert!((a.variance() - b.variance()).abs() <= 1e-12 * a.variance());
        }

        #[test]
        fn clark_dominates_means(
            m1 in -10.0f64..10.0, m2 in -10.0f64..10.0,
            s1 in 0.01f64..5.0, s2 in 0.01f64..5.0, r in -1.0f64..1.0,
        ) {
            let m = clark_limit_moments(&prior(m1, m2, s1, s2, r)).unwrap();
            prop_assert!(m.mean() >= m1.max(m2) - 1e-12);
        }

        #[test]
        fn rho_continuity(
            m1 in -3.0f64..3.0, m2 in -3.0f64..3.0,
            s1 in 0.3f64..3.0, s2 in 0.3f64..3.0,
            mm in -3.0f64..3.0, vm in 0.1f64..9.0, sign in any::<bool>(),
        ) {
            let mp = MaxPrior::gaussian(mm, vm).unwrap();
            let base = forward_moments_rho0(&prior(m1, m2, s1, s2, 0.0), &mp).unwrap();
            let r = if sign { 1e-7 } else { -1e-7 };
            let near = forward_moments(&prior(m1, m2, s1, s2, r), &mp).unwrap();
            prop_assert!((near.mean() - base.mean()).abs() <= 1e-5 * base.mean().abs().max(base.std_dev()));
            prop_assert!((near.variance() - base.variance()).abs() <= 1e-5 * base.variance());
        }

        #[test]
        fn min_is_negated_max(
            m1 in -3.0f64..3.0, m2 in -3.0f64..3.0,
            s1 in 0.3f64..3.0, s2 in 0.3f64..3.0,
            r in -0.9f64..0.9, mm in -3.0f64..3.0, vm in 0.1f64..9.0,
        ) {
            let p = prior(m1, m2, s1, s2, r);
            let mp = MaxPrior::gaussian(mm, vm).unwrap();
            let lo = min_moments(&p, &mp).unwrap();
            let hi = forward_moments(&p.negated(), &mp.negated()).unwrap();
            prop_assert_eq!(lo.mean(), -hi.mean());
            prop_assert_eq!(lo.variance(), hi.variance());
        }
    }
}
