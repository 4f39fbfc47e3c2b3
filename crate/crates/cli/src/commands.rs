//! Subcommand bodies. Each returns the rendered report and an exit status.

use clap::ValueEnum;
use gaussmax::ep::{iterate, marginals, MaxFactorState, NaturalGaussian};
use gaussmax::oracle::exact::{forward_quadrature_moments, inverse_quadrature_moments, UncorrelatedMax};
use gaussmax::oracle::sampling::{sample_forward, sample_inverse_mv, SampleStats, SamplingMode};
use gaussmax::pair_inverse::bivariate_log_pdf;
use gaussmax::{
    forward_aux, forward_density, inverse_density, set_inverse_moments, set_max_moments, BivariatePrior,
    Gaussian1, MaxPrior, MomentPair, MvPrior,
};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{float, json, Table};
use crate::spec::{Mode, Problem};

/// Relative tolerance for formula paths that are exact against 1-D quadrature.
pub const FORWARD_QUAD_TOL: f64 = 1e-6;
/// Relative tolerance against nested 2-D quadrature.
pub const INVERSE_QUAD_TOL: f64 = 1e-5;
/// Sampling agreement in standard errors.
pub const SE_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    pub status: i32,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, status: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl From<MomentPair> for Moments {
    fn from(m: MomentPair) -> Self {
        Moments {
            mean: m.mean(),
            variance: m.variance(),
        }
    }
}

impl From<Gaussian1> for Moments {
    fn from(g: Gaussian1) -> Self {
        Moments {
            mean: g.mean(),
            variance: g.variance(),
        }
    }
}

#[derive(Debug, Serialize)]
struct FinalStep {
    weights: [f64; 2],
    k: [f64; 2],
}

#[derive(Debug, Serialize)]
struct MaxDiagnostics {
    rho_clamped: bool,
    equal_rho_path: bool,
    correlation_evals: usize,
}

#[derive(Debug, Serialize)]
struct MaxReport {
    command: &'static str,
    n: usize,
    mean: f64,
    variance: f64,
    order: Vec<usize>,
    k_list: Vec<f64>,
    intermediate: Vec<Moments>,
    final_step: Option<FinalStep>,
    diagnostics: MaxDiagnostics,
}

pub fn cmd_max(p: &Problem, format: Format) -> Result<Output, CliError> {
    let (m, chain) = set_max_moments(&p.prior, &p.mprior, p.order)?;
    let final_step = chain.pairs.last().map(|pair| {
        let aux = forward_aux(pair, &p.mprior);
        FinalStep {
            weights: aux.weights,
            k: aux.k,
        }
    });
    let report = MaxReport {
        command: "max",
        n: p.prior.dim(),
        mean: m.mean(),
        variance: m.variance(),
        order: chain.order.clone(),
        k_list: chain.k_list.clone(),
        intermediate: chain.intermediate.iter().map(|&m| m.into()).collect(),
        final_step,
        diagnostics: MaxDiagnostics {
            rho_clamped: chain.rho_clamped || p.prior.rho_clamped(),
            equal_rho_path: chain.equal_rho_path,
            correlation_evals: chain.correlation_evals,
        },
    };
    Ok(Output::ok(match format {
        Format::Json => json(&report),
        Format::Csv => {
            let mut t = Table::new(["mean", "variance"]);
            t.push_floats(&[m.mean(), m.variance()]);
            t.render()
        }
    }))
}

#[derive(Debug, Serialize)]
pub struct VariableReport {
    pub index: usize,
    pub prior: Moments,
    pub posterior: Moments,
}

#[derive(Debug, Serialize)]
struct InverseDiagnostics {
    improper_cavities: usize,
    perturbed: bool,
    degenerate_messages: Option<usize>,
    message_changes: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct InverseReport {
    command: &'static str,
    method: &'static str,
    n: usize,
    variables: Vec<VariableReport>,
    max_message: Option<Moments>,
    diagnostics: InverseDiagnostics,
}

/// Settings for repeated EP updates of the max factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpSettings {
    pub sweeps: usize,
    pub damping: f64,
}

impl Default for EpSettings {
    fn default() -> Self {
        EpSettings {
            sweeps: 1,
            damping: 1.0,
        }
    }
}

pub fn posterior_marginals(p: &Problem, ep: EpSettings) -> Result<Vec<MomentPair>, CliError> {
    Ok(match p.mode {
        Mode::Ep => {
            let start = MaxFactorState::new(p.prior.dim(), ep.damping)?;
            let (state, _) = iterate(&start, &p.prior, &p.mprior, ep.sweeps)?;
            marginals(&state, &p.prior)
        }
        _ => set_inverse_moments(&p.prior, &p.mprior, p.order)?.marginals,
    })
}

fn variable_rows(prior: &MvPrior, post: &[MomentPair]) -> Vec<VariableReport> {
    post.iter()
        .enumerate()
        .map(|(i, m)| VariableReport {
            index: i,
            prior: prior.marginal(i).into(),
            posterior: (*m).into(),
        })
        .collect()
}

pub fn variable_table(rows: &[VariableReport]) -> Table {
    let mut t = Table::new([
        "index",
        "prior_mean",
        "prior_variance",
        "posterior_mean",
        "posterior_variance",
    ]);
    for r in rows {
        let mut row = vec![r.index.to_string()];
        row.extend(
            [r.prior.mean, r.prior.variance, r.posterior.mean, r.posterior.variance].map(float),
        );
        t.push(row);
    }
    t
}

fn message_moments(msg: &NaturalGaussian) -> Option<Moments> {
    msg.to_gaussian().map(Into::into)
}

pub fn cmd_inverse(p: &Problem, ep: EpSettings, format: Format) -> Result<Output, CliError> {
    let n = p.prior.dim();
    let report = if p.mode == Mode::Ep {
        let start = MaxFactorState::new(n, ep.damping)?;
        let (state, changes) = iterate(&start, &p.prior, &p.mprior, ep.sweeps)?;
        InverseReport {
            command: "inverse",
            method: "ep",
            n,
            variables: variable_rows(&p.prior, &marginals(&state, &p.prior)),
            max_message: message_moments(&state.output),
            diagnostics: InverseDiagnostics {
                improper_cavities: 0,
                perturbed: false,
                degenerate_messages: Some(state.degenerate_messages),
                message_changes: Some(changes),
            },
        }
    } else {
        let r = set_inverse_moments(&p.prior, &p.mprior, p.order)?;
        InverseReport {
            command: "inverse",
            method: "backward_sweep",
            n,
            variables: variable_rows(&p.prior, &r.marginals),
            max_message: None,
            diagnostics: InverseDiagnostics {
                improper_cavities: r.improper_cavities,
                perturbed: r.perturbed,
                degenerate_messages: None,
                message_changes: None,
            },
        }
    };
    Ok(Output::ok(match format {
        Format::Json => json(&report),
        Format::Csv => variable_table(&report.variables).render(),
    }))
}

/// Evaluation grid `lo..=hi` with `steps` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Grid {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(CliError::Validation(format!(
                "grid: need finite lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.steps < 2 {
            return Err(CliError::Validation("grid: need at least 2 steps".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(move |i| if i + 1 == self.steps { self.hi } else { self.lo + h * i as f64 })
    }
}

/// Partial grid settings from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridArgs {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub steps: Option<usize>,
}

impl GridArgs {
    fn resolve(&self, lo: f64, hi: f64, steps: usize) -> Result<Grid, CliError> {
        let g = Grid {
            lo: self.lo.unwrap_or(lo),
            hi: self.hi.unwrap_or(hi),
            steps: self.steps.unwrap_or(steps),
        };
        g.validate()?;
        Ok(g)
    }
}

fn is_uncorrelated(prior: &MvPrior) -> bool {
    let c = prior.cov();
    (0..prior.dim()).all(|i| (0..prior.dim()).all(|j| i == j || c[(i, j)] == 0.0))
}

/// Exact posterior density of the max, where one is available.
pub enum ExactMax {
    Pair(BivariatePrior, MaxPrior),
    Uncorrelated(UncorrelatedMax),
}

impl ExactMax {
    pub fn new(prior: &MvPrior, mprior: &MaxPrior) -> Result<Self, CliError> {
        if prior.dim() == 2 {
            Ok(ExactMax::Pair(prior.pair(0, 1), *mprior))
        } else if is_uncorrelated(prior) {
            let priors: Vec<Gaussian1> = (0..prior.dim()).map(|i| prior.marginal(i)).collect();
            Ok(ExactMax::Uncorrelated(UncorrelatedMax::new(&priors, mprior)?))
        } else {
            Err(CliError::Unsupported(
                "exact density unavailable: correlated inputs with N > 2".into(),
            ))
        }
    }

    pub fn density(&self, m: f64) -> f64 {
        match self {
            ExactMax::Pair(p, mp) => forward_density(p, mp, m),
            ExactMax::Uncorrelated(u) => u.density(m),
        }
    }
}

/// Rows of `(m, exact, gaussian approximation)` over a grid.
pub fn forward_density_rows(p: &Problem, grid: GridArgs) -> Result<(Grid, Vec<[f64; 3]>), CliError> {
    let exact = ExactMax::new(&p.prior, &p.mprior)?;
    let (approx, _) = set_max_moments(&p.prior, &p.mprior, p.order)?;
    let (mut lo, mut hi) = (approx.mean() - 8.0 * approx.std_dev(), approx.mean() + 8.0 * approx.std_dev());
    if let ExactMax::Uncorrelated(u) = &exact {
        let q = u.moments();
        lo = lo.min(q.mean - 8.0 * q.variance.sqrt());
        hi = hi.max(q.mean + 8.0 * q.variance.sqrt());
    }
    let grid = grid.resolve(lo, hi, 401)?;
    let g = approx.to_gaussian();
    let rows = grid.points().map(|m| [m, exact.density(m), g.pdf(m)]).collect();
    Ok((grid, rows))
}

pub fn cmd_density(p: &Problem, grid: GridArgs, format: Format) -> Result<Output, CliError> {
    if format == Format::Json {
        return Err(CliError::Unsupported("density grids are written as CSV only".into()));
    }
    if p.mode == Mode::Forward {
        let (_, rows) = forward_density_rows(p, grid)?;
        let mut t = Table::new(["m", "exact_density", "gaussian_approx_density"]);
        for r in rows {
            t.push_floats(&r);
        }
        return Ok(Output::ok(t.render()));
    }
    if p.prior.dim() != 2 {
        return Err(CliError::Unsupported(format!(
            "exact density unavailable: the inverse density needs N = 2, got N = {}",
            p.prior.dim()
        )));
    }
    let pair = p.prior.pair(0, 1);
    let lo = (0..2).map(|i| pair.mean(i) - 5.0 * pair.sigma(i)).fold(f64::INFINITY, f64::min);
    let hi = (0..2).map(|i| pair.mean(i) + 5.0 * pair.sigma(i)).fold(f64::NEG_INFINITY, f64::max);
    let grid = grid.resolve(lo, hi, 101)?;
    let mut t = Table::new(["x1", "x2", "density"]);
    for x1 in grid.points() {
        for x2 in grid.points() {
            let d = match &p.mprior {
                MaxPrior::Gaussian(g) => inverse_density(&pair, g, x1, x2),
                MaxPrior::Uninformative => bivariate_log_pdf(&pair, x1, x2).exp(),
            };
            t.push_floats(&[x1, x2, d]);
        }
    }
    Ok(Output::ok(t.render()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub target: String,
    pub statistic: &'static str,
    pub oracle: &'static str,
    pub formula_value: f64,
    pub oracle_value: f64,
    pub abs_deviation: f64,
    pub rel_deviation: f64,
    /// Quadrature tolerance or sampling standard error, whichever applies.
    pub standard_error: Option<f64>,
    pub tolerance: f64,
    /// False where the formula is an approximation; such rows are informative only.
    pub asserted: bool,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    command: &'static str,
    mode: Mode,
    n: usize,
    n_samples: usize,
    seed: u64,
    status: &'static str,
    checks: Vec<Check>,
}

struct CheckBuilder {
    checks: Vec<Check>,
}

impl CheckBuilder {
    fn quad(&mut self, target: &str, formula: Moments, oracle: Moments, tol: f64, asserted: bool) {
        let scale = oracle.variance.sqrt();
        for (stat, a, b, denom) in [
            ("mean", formula.mean, oracle.mean, oracle.mean.abs().max(scale)),
            ("variance", formula.variance, oracle.variance, oracle.variance),
        ] {
            let abs = (a - b).abs();
            let rel = abs / denom;
            self.checks.push(Check {
                target: target.into(),
                statistic: stat,
                oracle: "quadrature",
                formula_value: a,
                oracle_value: b,
                abs_deviation: abs,
                rel_deviation: rel,
                standard_error: None,
                tolerance: tol,
                asserted,
                pass: rel <= tol,
            });
        }
    }

    fn sampled(&mut self, target: &str, formula: Moments, s: &SampleStats, asserted: bool) {
        for (stat, a, b, se) in [
            ("mean", formula.mean, s.mean, s.se_mean),
            ("variance", formula.variance, s.variance, s.se_variance),
        ] {
            let abs = (a - b).abs();
            self.checks.push(Check {
                target: target.into(),
                statistic: stat,
                oracle: "importance_sampling",
                formula_value: a,
                oracle_value: b,
                abs_deviation: abs,
                rel_deviation: abs / b.abs().max(s.variance.sqrt()),
                standard_error: Some(se),
                tolerance: SE_MULTIPLE * se,
                asserted,
                pass: abs <= SE_MULTIPLE * se,
            });
        }
    }
}

pub fn cmd_oracle_check(p: &Problem, n_samples: usize, ep: EpSettings, format: Format) -> Result<Output, CliError> {
    let n = p.prior.dim();
    let mut b = CheckBuilder { checks: Vec::new() };
    match p.mode {
        Mode::Forward => {
            let (m, _) = set_max_moments(&p.prior, &p.mprior, p.order)?;
            let exact_formula = n <= 2;
            match ExactMax::new(&p.prior, &p.mprior) {
                Ok(ExactMax::Pair(pair, mp)) => {
                    let q = forward_quadrature_moments(&pair, &mp)?;
                    b.quad("m", m.into(), Moments { mean: q.mean, variance: q.variance }, FORWARD_QUAD_TOL, true);
                }
                Ok(ExactMax::Uncorrelated(u)) => {
                    let q = u.moments();
                    let oracle = Moments {
                        mean: q.mean,
                        variance: q.variance,
                    };
                    b.quad("m", m.into(), oracle, FORWARD_QUAD_TOL, exact_formula);
                }
                Err(CliError::Unsupported(_)) => {}
                Err(e) => return Err(e),
            }
            let s = sample_forward(&p.prior, &p.mprior, n_samples, p.seed, SamplingMode::Importance)?;
            b.sampled("m", m.into(), &s, exact_formula);
        }
        Mode::Inverse | Mode::Ep => {
            let post = posterior_marginals(p, ep)?;
            match p.mprior {
                MaxPrior::Uninformative => {
                    for (i, m) in post.iter().enumerate() {
                        b.quad(&format!("x{i}"), (*m).into(), p.prior.marginal(i).into(), 1e-12, true);
                    }
                }
                MaxPrior::Gaussian(g) => {
                    let exact_formula = n <= 2;
                    if n == 2 {
                        let q = inverse_quadrature_moments(&p.prior.pair(0, 1), &g)?;
                        for (i, qm) in [q.x1, q.x2].into_iter().enumerate() {
                            b.quad(&format!("x{i}"), post[i].into(), qm.into(), INVERSE_QUAD_TOL, true);
                        }
                    }
                    let s = sample_inverse_mv(&p.prior, &g, n_samples, p.seed)?;
                    for (i, st) in s.iter().enumerate() {
                        b.sampled(&format!("x{i}"), post[i].into(), st, exact_formula);
                    }
                }
            }
        }
    }
    let pass = b.checks.iter().all(|c| !c.asserted || c.pass);
    let report = OracleReport {
        command: "oracle-check",
        mode: p.mode,
        n,
        n_samples,
        seed: p.seed,
        status: if pass { "PASS" } else { "FAIL" },
        checks: b.checks,
    };
    let text = match format {
        Format::Json => json(&report),
        Format::Csv => {
            let mut t = Table::new([
                "target",
                "statistic",
                "oracle",
                "formula_value",
                "oracle_value",
                "abs_deviation",
                "rel_deviation",
                "tolerance",
                "asserted",
                "pass",
            ]);
            for c in &report.checks {
                let mut row = vec![c.target.clone(), c.statistic.into(), c.oracle.into()];
                row.extend(
                    [c.formula_value, c.oracle_value, c.abs_deviation, c.rel_deviation, c.tolerance].map(float),
                );
                row.push(c.asserted.to_string());
                row.push(c.pass.to_string());
                t.push(row);
            }
            t.render()
        }
    };
    Ok(Output {
        text,
        status: if pass { 0 } else { 1 },
    })
}
