//! JSON problem description and its expansion into library types.

use clap::ValueEnum;
use gaussmax::{ChainOrder, MaxPrior, MvPrior};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub means: Vec<f64>,
    pub cov: CovSpec,
    #[serde(default)]
    pub m_prior: MPriorSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub ordering: Ordering,
    #[serde(default)]
    pub seed: u64,
}

/// Covariance, either verbatim or as a shorthand expanded before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CovSpec {
    Full(Vec<Vec<f64>>),
    Diag(Vec<f64>),
    Equicorr { rho: f64, variances: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MPriorSpec {
    Gaussian { mean: f64, variance: f64 },
    Keyword(Keyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    Uninformative,
}

impl Default for MPriorSpec {
    fn default() -> Self {
        MPriorSpec::Keyword(Keyword::Uninformative)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Forward,
    Inverse,
    Ep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    #[default]
    Natural,
    Greedy,
}

impl From<Ordering> for ChainOrder {
    fn from(o: Ordering) -> Self {
        match o {
            Ordering::Natural => ChainOrder::NaturalIndex,
            Ordering::Greedy => ChainOrder::GreedySeparation,
        }
    }
}

/// A validated spec.
#[derive(Debug, Clone)]
pub struct Problem {
    pub prior: MvPrior,
    pub mprior: MaxPrior,
    pub order: ChainOrder,
    pub mode: Mode,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Validation(format!("spec: {inner}"))
            } else {
                CliError::Validation(format!("{path}: {inner}"))
            }
        })
    }

    pub fn to_json(&self) -> String {
        crate::output::json(self)
    }

    pub fn build(&self) -> Result<Problem, CliError> {
        let n = self.means.len();
        if n == 0 {
            return Err(field("means", "need at least one variable"));
        }
        if let Some(i) = self.means.iter().position(|m| !m.is_finite()) {
            return Err(field(&format!("means[{i}]"), "must be finite"));
        }
        let means = self.means.clone();
        let variances_len = |v: &[f64], name: &str| {
            if v.len() == n {
                Ok(())
            } else {
                Err(field(name, &format!("expected {n} entries, got {}", v.len())))
            }
        };
        let prior = match &self.cov {
            CovSpec::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(field("cov.full", &format!("expected a {n}x{n} matrix")));
                }
                MvPrior::new(means, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
                    .map_err(|e| field("cov.full", &e.to_string()))?
            }
            CovSpec::Diag(v) => {
                variances_len(v, "cov.diag")?;
                MvPrior::diagonal(means, v).map_err(|e| field("cov.diag", &e.to_string()))?
            }
            CovSpec::Equicorr { rho, variances } => {
                variances_len(variances, "cov.equicorr.variances")?;
                MvPrior::equicorrelated(means, variances, *rho)
                    .map_err(|e| field("cov.equicorr", &e.to_string()))?
            }
        };
        let mprior = match self.m_prior {
            MPriorSpec::Keyword(Keyword::Uninformative) => MaxPrior::Uninformative,
            MPriorSpec::Gaussian { mean, variance } => {
                if !mean.is_finite() {
                    return Err(field("m_prior.mean", "must be finite"));
                }
                MaxPrior::gaussian(mean, variance)
                    .map_err(|e| field("m_prior.variance", &e.to_string()))?
            }
        };
        Ok(Problem {
            prior,
            mprior,
            order: self.ordering.into(),
            mode: self.mode,
            seed: self.seed,
        })
    }
}

fn field(name: &str, reason: &str) -> CliError {
    CliError::Validation(format!("{name}: {reason}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthands_expand() {
        let s = ProblemSpec::parse(
            r#"{"means":[0,1,2],"cov":{"equicorr":{"rho":0.5,"variances":[1,4,1]}}}"#,
        )
        .unwrap();
        let p = s.build().unwrap();
        assert_eq!(p.prior.cov()[(0, 1)], 1.0);
        assert_eq!(p.prior.cov()[(1, 1)], 4.0);
        assert_eq!(p.mprior, MaxPrior::Uninformative);
        assert_eq!(p.order, ChainOrder::NaturalIndex);
    }

    #[test]
    fn errors_name_the_field() {
        let e = ProblemSpec::parse(r#"{"means":[0,1],"cov":{"diag":[1,-1]}}"#)
            .unwrap()
            .build()
            .unwrap_err();
        assert!(e.to_string().starts_with("cov.diag"), "{e}");
        let e = ProblemSpec::parse(r#"{"means":[0,1],"cov":{"diag":[1,1]},"m_prior":{"mean":0}}"#)
            .unwrap_err();
        assert!(e.to_string().starts_with("m_prior"), "{e}");
        let e = ProblemSpec::parse(r#"{"means":[0,"x"],"cov":{"diag":[1,1]}}"#).unwrap_err();
        assert!(e.to_string().starts_with("means[1]"), "{e}");
    }

    #[test]
    fn dump_round_trips() {
        let s = ProblemSpec {
            means: vec![0.1, -1.0 / 3.0],
            cov: CovSpec::Full(vec![vec![1.0, 0.2], vec![0.2, 2.0]]),
            m_prior: MPriorSpec::Gaussian {
                mean: 0.7,
                variance: 1e-3,
            },
            mode: Mode::Inverse,
            ordering: Ordering::Greedy,
            seed: 17,
        };
        assert_eq!(ProblemSpec::parse(&s.to_json()).unwrap(), s);
    }
}
