//! Monte Carlo reference statistics with deterministic seeding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pair_max::{BivariatePrior, MaxPrior};
use crate::scalar::Gaussian1;
use crate::set_max::MvPrior;

/// Smallest accepted sample size.
pub const MIN_SAMPLES: usize = 1000;
/// Reweighted runs with a smaller effective sample size are rejected.
pub const MIN_ESS: f64 = 100.0;
const EIGEN_TRUNCATION: f64 = -1e-10;
/// Rejection sampling gives up after this many proposals per requested sample.
const MAX_PROPOSALS_PER_SAMPLE: usize = 10_000;
const BATCHES: usize = 100;

/// Summary of a (possibly weighted) sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    pub seed: u64,
    /// `(Σw)² / Σw²`; equals `n` for unweighted samples.
    pub ess: f64,
}

impl SampleStats {
    /// Weighted statistics. Standard errors use the delta-method forms
    /// `Σw²(x-μ)² / (Σw)²` and `Σw²((x-μ)² - σ²)² / (Σw)²`.
    pub fn weighted(xs: &[f64], ws: &[f64], seed: u64) -> Self {
        let sw: f64 = ws.iter().sum();
        let sw2: f64 = ws.iter().map(|w| w * w).sum();
        let mean = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
        let variance = xs.iter().zip(ws).map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / sw;
        let (mut a, mut b) = (0.0, 0.0);
        for (x, w) in xs.iter().zip(ws) {
            let d2 = (x - mean).powi(2);
            a += w * w * d2;
            b += w * w * (d2 - variance).powi(2);
        }
        SampleStats {
            n: xs.len(),
            mean,
            variance,
            se_mean: a.sqrt() / sw,
            se_variance: b.sqrt() / sw,
            seed,
            ess: sw * sw / sw2,
        }
    }

    pub fn unweighted(xs: &[f64], seed: u64) -> Self {
        Self::weighted(xs, &vec![1.0; xs.len()], seed)
    }

    /// `|value - mean| ≤ z · se_mean`.
    pub fn mean_within(&self, value: f64, z: f64) -> bool {
        (value - self.mean).abs() <= z * self.se_mean
    }

    pub fn variance_within(&self, value: f64, z: f64) -> bool {
        (value - self.variance).abs() <= z * self.se_variance
    }
}

/// How the max belief is imposed on prior draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    Importance,
    Rejection,
}

/// Draws from `N(μ, Σ)` through `μ + V √Λ z`, negative eigenvalues set to zero.
#[derive(Debug, Clone)]
pub struct MvSampler {
    means: DVector<f64>,
    factor: DMatrix<f64>,
}

impl MvSampler {
    pub fn new(prior: &MvPrior) -> Result<Self> {
        let eig = SymmetricEigen::new(prior.cov().clone());
        let max_diag = prior.cov().diagonal().max();
        let mut scale = eig.eigenvalues.clone();
        for v in scale.iter_mut() {
            if *v < EIGEN_TRUNCATION * max_diag {
                return Err(invalid("cov", format!("eigenvalue {v:e} is too negative to sample")));
            }
            *v = v.max(0.0).sqrt();
        }
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&scale);
        Ok(MvSampler {
            means: prior.means().clone(),
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn draw_into<R: Rng>(&self, rng: &mut R, z: &mut DVector<f64>, out: &mut DVector<f64>) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        out.copy_from(&self.means);
        out.gemv(1.0, &self.factor, z, 1.0);
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(invalid("n", format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    Ok(())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stats of `m = max(x)` under the max belief.
pub fn sample_forward(
    prior: &MvPrior,
    mprior: &MaxPrior,
    n: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<SampleStats> {
    check_n(n)?;
    let s = MvSampler::new(prior)?;
    let mut r = rng(seed);
    let d = s.dim();
    let (mut z, mut x) = (DVector::zeros(d), DVector::zeros(d));
    let mut draw = |r: &mut ChaCha8Rng| {
        s.draw_into(r, &mut z, &mut x);
        x.max()
    };
    match (mprior, mode) {
        (MaxPrior::Uninformative, _) => {
            let ms: Vec<f64> = (0..n).map(|_| draw(&mut r)).collect();
            Ok(SampleStats::unweighted(&ms, seed))
        }
        (MaxPrior::Gaussian(g), SamplingMode::Importance) => {
            let mut ms = Vec::with_capacity(n);
            let mut lw = Vec::with_capacity(n);
            for _ in 0..n {
                let m = draw(&mut r);
                ms.push(m);
                lw.push(g.log_pdf(m));
            }
            weighted_stats(&ms, &lw, seed)
        }
        (MaxPrior::Gaussian(g), SamplingMode::Rejection) => {
            let mut ms = Vec::with_capacity(n);
            let mut proposals = 0usize;
            while ms.len() < n {
                if proposals >= MAX_PROPOSALS_PER_SAMPLE * n {
                    return Err(Error::DegenerateReweighting {
                        ess: ms.len() as f64,
                        min: n as f64,
                    });
                }
                proposals += 1;
                let m = draw(&mut r);
                let u: f64 = r.random();
                if u < (-0.5 * (m - g.mean()).powi(2) / g.variance()).exp() {
                    ms.push(m);
                }
            }
            Ok(SampleStats::unweighted(&ms, seed))
        }
    }
}

fn weighted_stats(xs: &[f64], log_w: &[f64], seed: u64) -> Result<SampleStats> {
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateReweighting { ess: 0.0, min: MIN_ESS });
    }
    let ws: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let st = SampleStats::weighted(xs, &ws, seed);
    if st.ess < MIN_ESS {
        return Err(Error::DegenerateReweighting {
            ess: st.ess,
            min: MIN_ESS,
        });
    }
    Ok(st)
}

/// Importance-sampled stats of every `x_i` given the max belief.
pub fn sample_inverse_mv(prior: &MvPrior, mprior: &Gaussian1, n: usize, seed: u64) -> Result<Vec<SampleStats>> {
    check_n(n)?;
    let s = MvSampler::new(prior)?;
    let mut r = rng(seed);
    let d = s.dim();
    let (mut z, mut x) = (DVector::zeros(d), DVector::zeros(d));
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); d];
    let mut lw = Vec::with_capacity(n);
    for _ in 0..n {
        s.draw_into(&mut r, &mut z, &mut x);
        lw.push(mprior.log_pdf(x.max()));
        for (c, v) in cols.iter_mut().zip(x.iter()) {
            c.push(*v);
        }
    }
    cols.iter().map(|c| weighted_stats(c, &lw, seed)).collect()
}

/// Importance-sampled stats of `x₁` and `x₂` given the max belief.
pub fn sample_inverse(
    prior: &BivariatePrior,
    mprior: &Gaussian1,
    n: usize,
    seed: u64,
) -> Result<(SampleStats, SampleStats)> {
    let v = sample_inverse_mv(&MvPrior::from_bivariate(prior), mprior, n, seed)?;
    Ok((v[0], v[1]))
}

/// Sample correlation with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub seed: u64,
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Correlation between `x_target` and `max(x_k : k ∈ prefix)` under the prior.
pub fn sample_prefix_correlation(
    prior: &MvPrior,
    prefix: &[usize],
    target: usize,
    n: usize,
    seed: u64,
) -> Result<CorrelationEstimate> {
    check_n(n)?;
    if prefix.is_empty() || prefix.contains(&target) || target >= prior.dim() {
        return Err(invalid("prefix", "must be non-empty and exclude the target"));
    }
    let s = MvSampler::new(prior)?;
    let mut r = rng(seed);
    let d = s.dim();
    let (mut z, mut x) = (DVector::zeros(d), DVector::zeros(d));
    let mut xs = Vec::with_capacity(n);
    let mut ms = Vec::with_capacity(n);
    for _ in 0..n {
        s.draw_into(&mut r, &mut z, &mut x);
        xs.push(x[target]);
        ms.push(prefix.iter().map(|&k| x[k]).fold(f64::NEG_INFINITY, f64::max));
    }
    let value = correlation(&xs, &ms);
    let size = n / BATCHES;
    let batch: Vec<f64> = (0..BATCHES)
        .map(|b| correlation(&xs[b * size..(b + 1) * size], &ms[b * size..(b + 1) * size]))
        .collect();
    let bm = batch.iter().sum::<f64>() / BATCHES as f64;
    let bv = batch.iter().map(|c| (c - bm).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(CorrelationEstimate {
        value,
        se: (bv / BATCHES as f64).sqrt(),
        n,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_max_mean() {
        let p = MvPrior::diagonal(vec![0.0, 0.0], &[1.0, 1.0]).unwrap();
        let s = sample_forward(&p, &MaxPrior::Uninformative, 1_000_000, 7, SamplingMode::Importance).unwrap();
        assert!(s.mean_within(1.0 / std::f64::consts::PI.sqrt(), 3.0));
        assert!(s.variance_within(1.0 - 1.0 / std::f64::consts::PI, 3.0));
        assert_eq!(s.ess, 1_000_000.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let p = MvPrior::equicorrelated(vec![0.0, 0.5, 1.0], &[1.0, 2.0, 0.5], 0.3).unwrap();
        let mp = MaxPrior::gaussian(1.0, 0.5).unwrap();
        for mode in [SamplingMode::Importance, SamplingMode::Rejection] {
            let a = sample_forward(&p, &mp, 5000, 11, mode).unwrap();
            let b = sample_forward(&p, &mp, 5000, 11, mode).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, sample_forward(&p, &mp, 5000, 12, mode).unwrap());
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let p = MvPrior::diagonal(vec![0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(sample_forward(&p, &MaxPrior::Uninformative, 999, 1, SamplingMode::Importance).is_err());
    }

    #[test]
    fn inconsistent_belief_is_degenerate() {
        let p = MvPrior::diagonal(vec![0.0, 0.0], &[1.0, 1.0]).unwrap();
        let mp = MaxPrior::gaussian(-30.0, 0.01).unwrap();
        let r = sample_forward(&p, &mp, 10_000, 1, SamplingMode::Importance);
        assert!(matches!(r, Err(Error::DegenerateReweighting { .. })));
    }

    #[test]
    fn wide_belief_recovers_prior_marginals() {
        let b = BivariatePrior::new(0.5, -1.0, 1.2, 0.7, 0.4).unwrap();
        let (x1, x2) = sample_inverse(&b, &Gaussian1::new(0.0, 1e16).unwrap(), 200_000, 3).unwrap();
        assert!(x1.mean_within(0.5, 3.0) && x1.variance_within(1.44, 3.0));
        assert!(x2.mean_within(-1.0, 3.0) && x2.variance_within(0.49, 3.0));
    }

    #[test]
    fn indefinite_within_tolerance_is_sampled() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = MvPrior::new(vec![0.0, 0.0], cov).unwrap();
        let s = MvSampler::new(&p).unwrap();
        let mut r = rng(1);
        let (mut z, mut x) = (DVector::zeros(2), DVector::zeros(2));
        s.draw_into(&mut r, &mut z, &mut x);
        assert!((x[0] - x[1]).abs() < 1e-12);
    }

    #[test]
    fn unweighted_standard_errors() {
        let xs: Vec<f64> = (0..1000).map(|i| (i % 10) as f64).collect();
        let s = SampleStats::unweighted(&xs, 0);
        assert!((s.se_mean - (s.variance / 1000.0).sqrt()).abs() < 1e-14);
    }
}
