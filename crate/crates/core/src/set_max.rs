//! Max over a finite set of correlated Gaussians by a left-to-right chain of
//! pairwise steps.
//!
//! Intermediate maxima `m_(1..j)` are moment-matched likelihoods; the max
//! belief enters only at the final step. Correlations between each pending
//! variable and the running max are propagated step by step.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::ep::NaturalGaussian;
use crate::error::{invalid, Error, Result};
use crate::pair_inverse::inverse_moments;
use crate::pair_max::{
    clamp_rho, clark_step, forward_moments, BivariatePrior, MaxPrior, MomentPair,
};
use crate::scalar::{gaussian_product, std_cdf, Gaussian1};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const EQUAL_RHO_TOL: f64 = 1e-12;
/// Variance multiplier substituted for an improper cavity.
pub const IMPROPER_CAVITY_SCALE: f64 = 1e12;

/// N-dimensional Gaussian prior over the generating variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MvPrior {
    means: DVector<f64>,
    cov: DMatrix<f64>,
    sigma: Vec<f64>,
    rho: DMatrix<f64>,
    rho_clamped: bool,
}

impl MvPrior {
    pub fn new(means: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = means.len();
        if n == 0 {
            return Err(Error::Dimension("need at least one variable".into()));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Dimension(format!(
                "{n} means but a {}x{} covariance",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if let Some(v) = means.iter().find(|v| !v.is_finite()) {
            return Err(invalid("means", format!("must be finite, got {v}")));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(invalid("cov", "entries must be finite"));
        }
        let max_diag = (0..n).map(|i| cov[(i, i)]).fold(f64::MIN, f64::max);
        for i in 0..n {
            if !(cov[(i, i)] > 0.0) {
                return Err(invalid(
                    "cov",
                    format!("diagonal entry {i} must be > 0, got {}", cov[(i, i)]),
                ));
            }
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * max_diag {
                    return Err(invalid("cov", format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min_eig < -PSD_TOL * max_diag {
            return Err(invalid(
                "cov",
                format!("not positive semi-definite (smallest eigenvalue {min_eig:e})"),
            ));
        }
        let sigma: Vec<f64> = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
        let mut rho = DMatrix::identity(n, n);
        let mut rho_clamped = false;
        for i in 0..n {
            for j in 0..i {
                let raw = 0.5 * (cov[(i, j)] + cov[(j, i)]) / (sigma[i] * sigma[j]);
                let (r, c) = clamp_rho(raw.clamp(-1.0, 1.0));
                rho_clamped |= c;
                rho[(i, j)] = r;
                rho[(j, i)] = r;
            }
        }
        Ok(MvPrior {
            means: DVector::from_vec(means),
            cov,
            sigma,
            rho,
            rho_clamped,
        })
    }

    /// Independent variables.
    pub fn diagonal(means: Vec<f64>, variances: &[f64]) -> Result<Self> {
        if variances.len() != means.len() {
            return Err(Error::Dimension(format!(
                "{} means but {} variances",
                means.len(),
                variances.len()
            )));
        }
        Self::new(means, DMatrix::from_diagonal(&DVector::from_column_slice(variances)))
    }

    /// All pairwise correlations equal to `rho`.
    pub fn equicorrelated(means: Vec<f64>, variances: &[f64], rho: f64) -> Result<Self> {
        let n = means.len();
        if variances.len() != n {
            return Err(Error::Dimension(format!(
                "{n} means but {} variances",
                variances.len()
            )));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(invalid("variances", format!("must be finite and > 0, got {v}")));
        }
        let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                variances[i]
            } else {
                rho * sd[i] * sd[j]
            }
        });
        Self::new(means, cov)
    }

    /// The two-variable prior, keeping its standard deviations and correlation verbatim.
    pub fn from_bivariate(p: &BivariatePrior) -> Self {
        let sigma = vec![p.sigma(0), p.sigma(1)];
        let c = p.rho() * sigma[0] * sigma[1];
        let cov = DMatrix::from_row_slice(2, 2, &[sigma[0] * sigma[0], c, c, sigma[1] * sigma[1]]);
        let rho = DMatrix::from_row_slice(2, 2, &[1.0, p.rho(), p.rho(), 1.0]);
        MvPrior {
            means: DVector::from_vec(vec![p.mean(0), p.mean(1)]),
            cov,
            sigma,
            rho,
            rho_clamped: p.rho_clamped(),
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.means[i]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigma[i]
    }

    /// Correlation coefficient, clamped into the valid range.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.rho[(i, j)]
    }

    pub fn rho_clamped(&self) -> bool {
        self.rho_clamped
    }

    pub fn marginal(&self, i: usize) -> Gaussian1 {
        Gaussian1::new(self.means[i], self.sigma[i] * self.sigma[i]).expect("validated")
    }

    /// Two-variable prior over `(x_i, x_j)`.
    pub fn pair(&self, i: usize, j: usize) -> BivariatePrior {
        BivariatePrior::from_parts(
            [self.means[i], self.means[j]],
            [self.sigma[i], self.sigma[j]],
            self.rho[(i, j)],
            self.rho_clamped,
        )
    }

    /// Prior over `-x`.
    pub fn negated(&self) -> Self {
        MvPrior {
            means: -self.means.clone(),
            ..self.clone()
        }
    }

    /// The common off-diagonal correlation, if all agree.
    pub fn equal_rho(&self) -> Option<f64> {
        let n = self.dim();
        if n < 2 {
            return None;
        }
        let r0 = self.rho[(1, 0)];
        for i in 0..n {
            for j in 0..i {
                if (self.rho[(i, j)] - r0).abs() > EQUAL_RHO_TOL {
                    return None;
                }
            }
        }
        Some(r0)
    }
}

/// Order in which variables enter the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainOrder {
    /// `x₁, x₂, …, x_N`.
    #[default]
    NaturalIndex,
    /// Start with the best-separated pair, then repeatedly add the variable
    /// best separated from the running max.
    GreedySeparation,
}

/// Record of the chain of pairwise max steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxChain {
    /// Variable indices in the order they entered.
    pub order: Vec<usize>,
    /// Likelihood moments of `m_(12), m_(123), …, m_(1..N)`.
    pub intermediate: Vec<MomentPair>,
    /// `k` of each step: running max mean minus the entering mean, over the
    /// difference's standard deviation.
    pub k_list: Vec<f64>,
    /// `rho_cache[s]`: correlation of the variable entering at step `s` with
    /// the running max it joins.
    pub rho_cache: Vec<f64>,
    /// Two-variable priors `(running max, entering variable)` of each step.
    pub pairs: Vec<BivariatePrior>,
    /// Number of recursive correlation updates performed.
    pub correlation_evals: usize,
    /// True when the shared-correlation shortcut was used.
    pub equal_rho_path: bool,
    /// True when any propagated correlation was clamped.
    pub rho_clamped: bool,
}

/// One recursive correlation update: correlation of `x_i` with
/// `max(m_prev, x_j)` from its correlations with each.
fn recurse(k: f64, sigma_j: f64, rho_ij: f64, sigma_prev: f64, rho_prev: f64, sigma_new: f64) -> f64 {
    (std_cdf(-k) * sigma_j * rho_ij + std_cdf(k) * sigma_prev * rho_prev) / sigma_new
}

fn separation(mean_a: f64, sd_a: f64, mean_b: f64, sd_b: f64, rho: f64) -> Option<f64> {
    let a = ((sd_a - sd_b).powi(2) + 2.0 * (1.0 - rho) * sd_a * sd_b).sqrt();
    if a <= 1e-12 * sd_a.max(sd_b) {
        None
    } else {
        Some((mean_a - mean_b).abs() / a)
    }
}

fn first_pair(prior: &MvPrior, order: ChainOrder) -> (usize, usize) {
    match order {
        ChainOrder::NaturalIndex => (0, 1),
        ChainOrder::GreedySeparation => {
            let n = prior.dim();
            let mut best = (0, 1);
            let mut best_k = f64::NEG_INFINITY;
            for i in 0..n {
                for j in i + 1..n {
                    let k = separation(
                        prior.mean(i),
                        prior.sigma(i),
                        prior.mean(j),
                        prior.sigma(j),
                        prior.rho(i, j),
                    )
                    .unwrap_or(f64::INFINITY);
                    if k > best_k {
                        best_k = k;
                        best = (i, j);
                    }
                }
            }
            best
        }
    }
}

/// Runs the chain of likelihood-limit steps over all `N ≥ 2` variables.
pub fn build_chain(prior: &MvPrior, order: ChainOrder) -> Result<MaxChain> {
    let n = prior.dim();
    if n < 2 {
        return Err(Error::Dimension("a chain needs at least two variables".into()));
    }
    let shared = prior.equal_rho();
    let (first, second) = first_pair(prior, order);
    let mut remaining: Vec<usize> = (0..n).filter(|&i| i != first).collect();
    let mut chain = MaxChain {
        order: vec![first],
        intermediate: Vec::with_capacity(n - 1),
        k_list: Vec::with_capacity(n - 1),
        rho_cache: Vec::with_capacity(n - 1),
        pairs: Vec::with_capacity(n - 1),
        correlation_evals: 0,
        equal_rho_path: shared.is_some(),
        rho_clamped: false,
    };
    // correlation of each pending variable with the running max; base case is
    // the plain pairwise coefficient with the first variable
    let mut rho_cur = vec![0.0; n];
    let mut rho_shared = shared.unwrap_or(0.0);
    if shared.is_none() {
        for &i in &remaining {
            rho_cur[i] = prior.rho(i, first);
        }
    }
    let mut cur_mean = prior.mean(first);
    let mut cur_sd = prior.sigma(first);
    for step in 0..n - 1 {
        let next = if step == 0 {
            second
        } else {
            match order {
                ChainOrder::NaturalIndex => remaining[0],
                ChainOrder::GreedySeparation => {
                    let mut best = remaining[0];
                    let mut best_k = f64::NEG_INFINITY;
                    for &i in &remaining {
                        let r = if shared.is_some() { rho_shared } else { rho_cur[i] };
                        let k = separation(cur_mean, cur_sd, prior.mean(i), prior.sigma(i), r)
                            .unwrap_or(f64::INFINITY);
                        if k > best_k {
                            best_k = k;
                            best = i;
                        }
                    }
                    best
                }
            }
        };
        remaining.retain(|&i| i != next);
        let raw = if shared.is_some() { rho_shared } else { rho_cur[next] };
        let (r, clamped) = clamp_rho(raw);
        chain.rho_clamped |= clamped;
        let pair = if step == 0 {
            prior.pair(first, next)
        } else {
            BivariatePrior::from_parts(
                [cur_mean, prior.mean(next)],
                [cur_sd, prior.sigma(next)],
                r,
                clamped,
            )
        };
        let s = clark_step(&pair)?;
        let new_sd = s.moments.std_dev();
        if let Some(pairwise) = shared {
            if !remaining.is_empty() {
                let upd = recurse(s.k, prior.sigma(next), pairwise, cur_sd, rho_shared, new_sd);
                let (c, f) = clamp_rho(upd.clamp(-1.0, 1.0));
                chain.rho_clamped |= f;
                rho_shared = c;
                chain.correlation_evals += 1;
            }
        } else {
            for &i in &remaining {
                let upd = recurse(s.k, prior.sigma(next), prior.rho(i, next), cur_sd, rho_cur[i], new_sd);
                let (c, f) = clamp_rho(upd.clamp(-1.0, 1.0));
                chain.rho_clamped |= f;
                rho_cur[i] = c;
                chain.correlation_evals += 1;
            }
        }
        chain.order.push(next);
        chain.intermediate.push(s.moments);
        chain.k_list.push(s.k);
        chain.rho_cache.push(r);
        chain.pairs.push(pair);
        cur_mean = s.moments.mean();
        cur_sd = new_sd;
    }
    Ok(chain)
}

/// Correlation of the variable at chain position `i` with the max over
/// positions `0..=j` (`j < i`), recomputed from the chain record.
///
/// Returns the value and the number of recursive evaluations used (`j`).
pub fn chain_correlation(prior: &MvPrior, chain: &MaxChain, i: usize, j: usize) -> Result<(f64, usize)> {
    if !(j < i && i < chain.order.len()) {
        return Err(invalid(
            "position",
            format!("need j < i < {}, got i = {i}, j = {j}", chain.order.len()),
        ));
    }
    let vi = chain.order[i];
    let mut rho = prior.rho(vi, chain.order[0]);
    let mut sd_prev = prior.sigma(chain.order[0]);
    let mut evals = 0;
    for step in 1..=j {
        let vj = chain.order[step];
        let sd_new = chain.intermediate[step - 1].std_dev();
        let upd = recurse(
            chain.k_list[step - 1],
            prior.sigma(vj),
            prior.rho(vi, vj),
            sd_prev,
            rho,
            sd_new,
        );
        rho = clamp_rho(upd.clamp(-1.0, 1.0)).0;
        sd_prev = sd_new;
        evals += 1;
    }
    Ok((rho, evals))
}

/// Approximate posterior moments of `max(x₁, …, x_N)` under the max belief.
pub fn set_max_moments(
    prior: &MvPrior,
    mprior: &MaxPrior,
    order: ChainOrder,
) -> Result<(MomentPair, MaxChain)> {
    if prior.dim() == 1 {
        let x = prior.marginal(0);
        let post = match mprior {
            MaxPrior::Gaussian(g) => gaussian_product(x, *g).component,
            MaxPrior::Uninformative => x,
        };
        let chain = MaxChain {
            order: vec![0],
            intermediate: vec![],
            k_list: vec![],
            rho_cache: vec![],
            pairs: vec![],
            correlation_evals: 0,
            equal_rho_path: false,
            rho_clamped: false,
        };
        return Ok((post.into(), chain));
    }
    let chain = build_chain(prior, order)?;
    let last = chain.pairs.last().expect("at least one step");
    let moments = forward_moments(last, mprior)?;
    Ok((moments, chain))
}

/// Moments of the min through `min(x) = -max(-x)`.
pub fn set_min_moments(
    prior: &MvPrior,
    mprior: &MaxPrior,
    order: ChainOrder,
) -> Result<(MomentPair, MaxChain)> {
    let (m, chain) = set_max_moments(&prior.negated(), &mprior.negated(), order)?;
    Ok((m.negated(), chain))
}

/// Posterior marginals from the backward sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetInverse {
    /// Indexed like the prior's variables.
    pub marginals: Vec<MomentPair>,
    /// Steps whose cavity over the running max came out improper.
    pub improper_cavities: usize,
    /// True when any pairwise step nudged its correlation off a singular value.
    pub perturbed: bool,
    pub chain: Option<MaxChain>,
}

/// Cavity `posterior / prior` for the running max, with improper results
/// replaced by a very wide belief centred on the posterior mean.
fn cavity(posterior: &MomentPair, prior: &Gaussian1) -> (Gaussian1, bool) {
    let post = NaturalGaussian::from_moments(posterior);
    let (msg, degenerate) = post.divide(&NaturalGaussian::from(*prior));
    match (degenerate, msg.to_gaussian()) {
        (false, Some(g)) => (g, false),
        _ => (
            Gaussian1::new(posterior.mean(), IMPROPER_CAVITY_SCALE * prior.variance())
                .expect("finite positive variance"),
            true,
        ),
    }
}

/// Approximate posterior marginals of all `x_i` under the max belief.
pub fn set_inverse_moments(
    prior: &MvPrior,
    mprior: &MaxPrior,
    order: ChainOrder,
) -> Result<SetInverse> {
    let n = prior.dim();
    let g = match mprior {
        MaxPrior::Uninformative => {
            return Ok(SetInverse {
                marginals: (0..n).map(|i| prior.marginal(i).into()).collect(),
                improper_cavities: 0,
                perturbed: false,
                chain: None,
            })
        }
        MaxPrior::Gaussian(g) => *g,
    };
    if n == 1 {
        let post = gaussian_product(prior.marginal(0), g).component;
        return Ok(SetInverse {
            marginals: vec![post.into()],
            improper_cavities: 0,
            perturbed: false,
            chain: None,
        });
    }
    let chain = build_chain(prior, order)?;
    let mut out: Vec<Option<MomentPair>> = vec![None; n];
    let mut belief = g;
    let mut improper = 0;
    let mut perturbed = false;
    for s in (0..n - 1).rev() {
        let pair = &chain.pairs[s];
        let r = inverse_moments(pair, &MaxPrior::Gaussian(belief))?;
        perturbed |= r.perturbed;
        out[chain.order[s + 1]] = Some(r.x2);
        if s == 0 {
            out[chain.order[0]] = Some(r.x1);
        } else {
            let (c, bad) = cavity(&r.x1, &pair.marginal(0));
            improper += bad as usize;
            belief = c;
        }
    }
    Ok(SetInverse {
        marginals: out.into_iter().map(|m| m.expect("every variable visited")).collect(),
        improper_cavities: improper,
        perturbed,
        chain: Some(chain),
    })
}

/// Pairwise separations `|k_ij|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationScores {
    pub scores: DMatrix<f64>,
    /// True when some pair had no spread in its difference (score set to `+∞`).
    pub degenerate: bool,
}

/// `|μ_i - μ_j| / √(σ_i² + σ_j² - 2ρ_ij σ_i σ_j)` for every pair; zero diagonal.
pub fn separation_scores(prior: &MvPrior) -> Result<SeparationScores> {
    let n = prior.dim();
    if n < 2 {
        return Err(Error::Dimension("need at least two variables".into()));
    }
    let mut scores = DMatrix::zeros(n, n);
    let mut degenerate = false;
    for i in 0..n {
        for j in 0..i {
            let k = match separation(
                prior.mean(i),
                prior.sigma(i),
                prior.mean(j),
                prior.sigma(j),
                prior.rho(i, j),
            ) {
                Some(k) => k,
                None => {
                    degenerate = true;
                    f64::INFINITY
                }
            };
            scores[(i, j)] = k;
            scores[(j, i)] = k;
        }
    }
    Ok(SeparationScores { scores, degenerate })
}

/// Mean and covariance of the other variables given `x_i = xi`.
pub fn conditional_slice(prior: &MvPrior, i: usize, xi: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = prior.dim();
    if n < 2 || i >= n {
        return Err(Error::Dimension(format!("index {i} invalid for dimension {n}")));
    }
    let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let cov = prior.cov();
    let sii = cov[(i, i)];
    let mean = DVector::from_iterator(
        n - 1,
        rest.iter()
            .map(|&j| prior.mean(j) + cov[(j, i)] / sii * (xi - prior.mean(i))),
    );
    let schur = DMatrix::from_fn(n - 1, n - 1, |a, b| {
        let (k, j) = (rest[a], rest[b]);
        cov[(k, j)] - cov[(k, i)] / sii * cov[(i, j)]
    });
    Ok((mean, schur))
}
