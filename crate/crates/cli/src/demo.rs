//! Preset reproductions of the illustrative figures.
//!
//! `fig3` and the correlation settings of `fig6` are the published ones.
//! Values the figures leave open are marked `unverified` below and in the
//! emitted preset names.

use clap::ValueEnum;
use serde::Serialize;

use crate::commands::{
    cmd_inverse, forward_density_rows, posterior_marginals, variable_table, EpSettings, Format, GridArgs,
    Output, VariableReport,
};
use crate::error::CliError;
use crate::output::{float, json, Table};
use crate::spec::{CovSpec, MPriorSpec, Mode, Ordering, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Fig2,
    Fig3,
    Fig5,
    Fig6,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedSpec {
    pub name: String,
    pub spec: ProblemSpec,
}

fn spec(means: Vec<f64>, cov: CovSpec, m_prior: MPriorSpec, mode: Mode) -> ProblemSpec {
    ProblemSpec {
        means,
        cov,
        m_prior,
        mode,
        ordering: Ordering::Natural,
        seed: 0,
    }
}

const FIG2_RHOS: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

/// Bivariate spec with unit variances, correlation `rho` and max belief N(1, 1).
fn unit_pair(rho: f64, mode: Mode) -> ProblemSpec {
    spec(
        vec![1.0, 1.0],
        CovSpec::Full(vec![vec![1.0, rho], vec![rho, 1.0]]),
        MPriorSpec::Gaussian {
            mean: 1.0,
            variance: 1.0,
        },
        mode,
    )
}

pub fn specs(demo: Demo) -> Vec<NamedSpec> {
    let named = |name: String, spec| NamedSpec { name, spec };
    match demo {
        // unverified: the left panel's prior is not given; the right panel's is reused
        Demo::Fig2 => FIG2_RHOS
            .iter()
            .map(|&r| named(format!("rho={r} (unverified prior)"), unit_pair(r, Mode::Forward)))
            .collect(),
        Demo::Fig3 => vec![named("inverse".into(), unit_pair(-0.5, Mode::Inverse))],
        Demo::Fig5 => {
            let un = MPriorSpec::default();
            let bad1: Vec<f64> = (1..=5).map(|i| 16f64.powi(-i)).collect();
            vec![
                // unverified: the good-fit panels do not state their parameters
                named(
                    "separated (unverified)".into(),
                    spec(vec![0.0, 1.0, 2.0, 3.0, 6.0], CovSpec::Diag(vec![1.0; 5]), un, Mode::Forward),
                ),
                named(
                    "similar (unverified)".into(),
                    spec(vec![0.0; 5], CovSpec::Diag(vec![1.0; 5]), un, Mode::Forward),
                ),
                named(
                    "multimodal".into(),
                    spec(bad1.iter().map(|b| -1.0 + b).collect(), CovSpec::Diag(bad1), un, Mode::Forward),
                ),
                named(
                    "asymmetric".into(),
                    spec(
                        (1..=5).map(|i| -(i as f64)).collect(),
                        CovSpec::Diag((1..=5).map(|i| (i as f64).powi(16) + 1.0).collect()),
                        un,
                        Mode::Forward,
                    ),
                ),
            ]
        }
        Demo::Fig6 => {
            // unverified: means and max beliefs; the correlations are the published ones
            let five = vec![0.0, 0.5, 1.0, 2.5, 3.0];
            let high = MPriorSpec::Gaussian {
                mean: 3.5,
                variance: 0.25,
            };
            let big: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
            vec![
                named(
                    "uncorrelated".into(),
                    spec(five.clone(), CovSpec::Diag(vec![1.0; 5]), high, Mode::Ep),
                ),
                named(
                    "rho=0.9".into(),
                    spec(
                        five.clone(),
                        CovSpec::Equicorr {
                            rho: 0.9,
                            variances: vec![1.0; 5],
                        },
                        high,
                        Mode::Ep,
                    ),
                ),
                named(
                    "inconsistent rho=0.2".into(),
                    spec(
                        five,
                        CovSpec::Equicorr {
                            rho: 0.2,
                            variances: vec![1.0; 5],
                        },
                        MPriorSpec::Gaussian {
                            mean: -3.0,
                            variance: 0.1,
                        },
                        Mode::Ep,
                    ),
                ),
                named(
                    "N=50 rho=0.5".into(),
                    spec(
                        big,
                        CovSpec::Equicorr {
                            rho: 0.5,
                            variances: vec![1.0; 50],
                        },
                        MPriorSpec::Gaussian {
                            mean: 3.0,
                            variance: 0.5,
                        },
                        Mode::Ep,
                    ),
                ),
            ]
        }
    }
}

fn csv_only(demo: Demo, format: Format) -> Result<(), CliError> {
    if format == Format::Json {
        Err(CliError::Unsupported(format!("{demo:?} emits CSV only").to_lowercase()))
    } else {
        Ok(())
    }
}

pub fn run(demo: Demo, format: Option<Format>) -> Result<Output, CliError> {
    let list = specs(demo);
    match demo {
        Demo::Fig2 => {
            csv_only(demo, format.unwrap_or(Format::Csv))?;
            let grid = GridArgs {
                lo: Some(-3.0),
                hi: Some(5.0),
                steps: Some(401),
            };
            let mut cols: Vec<Vec<[f64; 3]>> = Vec::new();
            for s in &list {
                cols.push(forward_density_rows(&s.spec.build()?, grid)?.1);
            }
            let mut header = vec!["m".to_string()];
            header.extend(FIG2_RHOS.iter().map(|r| format!("exact_rho={r}")));
            header.extend(FIG2_RHOS.iter().map(|r| format!("approx_rho={r}")));
            let mut t = Table::new(header);
            for i in 0..cols[0].len() {
                let mut row = vec![cols[0][i][0]];
                row.extend(cols.iter().map(|c| c[i][1]));
                row.extend(cols.iter().map(|c| c[i][2]));
                t.push_floats(&row);
            }
            Ok(Output { text: t.render(), status: 0 })
        }
        Demo::Fig3 => cmd_inverse(&list[0].spec.build()?, EpSettings::default(), format.unwrap_or(Format::Json)),
        Demo::Fig5 => {
            csv_only(demo, format.unwrap_or(Format::Csv))?;
            let mut t = Table::new(["regime", "m", "exact_density", "gaussian_approx_density"]);
            for s in &list {
                let (_, rows) = forward_density_rows(&s.spec.build()?, GridArgs::default())?;
                for r in rows {
                    let mut row = vec![s.name.clone()];
                    row.extend(r.map(float));
                    t.push(row);
                }
            }
            Ok(Output { text: t.render(), status: 0 })
        }
        Demo::Fig6 => {
            let mut panels = Vec::new();
            for s in &list {
                let p = s.spec.build()?;
                let post = posterior_marginals(&p, EpSettings::default())?;
                let variables: Vec<VariableReport> = post
                    .iter()
                    .enumerate()
                    .map(|(i, m)| VariableReport {
                        index: i,
                        prior: p.prior.marginal(i).into(),
                        posterior: (*m).into(),
                    })
                    .collect();
                panels.push((s.name.clone(), variables));
            }
            Ok(Output {
                text: match format.unwrap_or(Format::Csv) {
                    Format::Json => json(&panels.iter().map(|(n, v)| Panel { name: n, variables: v }).collect::<Vec<_>>()),
                    Format::Csv => {
                        let mut out = String::new();
                        for (k, (name, vars)) in panels.iter().enumerate() {
                            let body = variable_table(vars).render();
                            let mut lines = body.lines();
                            let header = lines.next().expect("table has a header");
                            if k == 0 {
                                out.push_str(&format!("panel,{header}\n"));
                            }
                            for l in lines {
                                out.push_str(&format!("{name},{l}\n"));
                            }
                        }
                        out
                    }
                },
                status: 0,
            })
        }
    }
}

#[derive(Serialize)]
struct Panel<'a> {
    name: &'a str,
    variables: &'a [VariableReport],
}
