//! `gaussmax` command-line front end.
//!
//! Exit codes: 0 ok, 1 oracle check failed, 2 invalid input, 3 unsupported
//! request, 4 degenerate sampler reweighting, 5 numerical failure.

mod commands;
mod demo;
mod error;
mod output;
mod spec;

use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{EpSettings, Format, GridArgs, Output};
use error::CliError;
use spec::{Mode, Ordering, ProblemSpec};

#[derive(Parser)]
#[command(name = "gaussmax", version, about = "Moments and EP messages for the max of correlated Gaussians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Posterior moments of the max.
    Max(Common),
    /// Posterior marginals of the inputs given a belief on their max.
    Inverse {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ep: EpArgs,
    },
    /// Density grid: exact against the Gaussian approximation (forward) or the 2-D inverse posterior.
    Density {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compare the formula path with quadrature and importance sampling.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200_000)]
        n_samples: usize,
        #[command(flatten)]
        ep: EpArgs,
    },
    /// Run a preset figure configuration.
    Demo {
        #[arg(value_enum)]
        name: demo::Demo,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Print the preset specs and exit.
        #[arg(long)]
        dump_spec: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON spec file; `-` or absent reads stdin.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_enum)]
    ordering: Option<Ordering>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Print the effective spec after flag overrides and exit.
    #[arg(long)]
    dump_spec: bool,
}

#[derive(Args)]
struct EpArgs {
    /// Repeated factor updates in `ep` mode.
    #[arg(long, default_value_t = 1)]
    sweeps: usize,
    #[arg(long, default_value_t = 1.0)]
    damping: f64,
}

impl From<&EpArgs> for EpSettings {
    fn from(a: &EpArgs) -> Self {
        EpSettings {
            sweeps: a.sweeps,
            damping: a.damping,
        }
    }
}

impl Common {
    fn load(&self, default_mode: Option<Mode>) -> Result<ProblemSpec, CliError> {
        let text = match &self.spec {
            Some(p) if p.as_os_str() != "-" => std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("spec: cannot read {}: {e}", p.display())))?,
            _ => {
                let mut s = String::new();
                io::stdin()
                    .read_to_string(&mut s)
                    .map_err(|e| CliError::Validation(format!("spec: cannot read stdin: {e}")))?;
                s
            }
        };
        let mut spec = ProblemSpec::parse(&text)?;
        if let Some(m) = default_mode {
            spec.mode = m;
        }
        if let Some(m) = self.mode {
            spec.mode = m;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(o) = self.ordering {
            spec.ordering = o;
        }
        Ok(spec)
    }
}

/// Rendered output and its destination (stdout when `None`).
type Emit = (Output, Option<PathBuf>);

fn dump(text: String, out: &Option<PathBuf>) -> Emit {
    (Output { text, status: 0 }, out.clone())
}

fn run(cli: Cli) -> Result<Emit, CliError> {
    match cli.command {
        Command::Max(c) => {
            let spec = c.load(Some(Mode::Forward))?;
            if c.dump_spec {
                return Ok(dump(spec.to_json(), &c.out));
            }
            let out = commands::cmd_max(&spec.build()?, c.format.unwrap_or(Format::Json))?;
            Ok((out, c.out))
        }
        Command::Inverse { common: c, ep } => {
            // `mode: ep` selects EP messages; any other mode runs the backward sweep
            let mut spec = c.load(None)?;
            if spec.mode == Mode::Forward {
                spec.mode = Mode::Inverse;
            }
            if c.dump_spec {
                return Ok(dump(spec.to_json(), &c.out));
            }
            let out = commands::cmd_inverse(&spec.build()?, (&ep).into(), c.format.unwrap_or(Format::Json))?;
            Ok((out, c.out))
        }
        Command::Density { common: c, lo, hi, steps } => {
            let spec = c.load(None)?;
            if c.dump_spec {
                return Ok(dump(spec.to_json(), &c.out));
            }
            let grid = GridArgs { lo, hi, steps };
            let out = commands::cmd_density(&spec.build()?, grid, c.format.unwrap_or(Format::Csv))?;
            Ok((out, c.out))
        }
        Command::OracleCheck { common: c, n_samples, ep } => {
            let spec = c.load(None)?;
            if c.dump_spec {
                return Ok(dump(spec.to_json(), &c.out));
            }
            let out = commands::cmd_oracle_check(
                &spec.build()?,
                n_samples,
                (&ep).into(),
                c.format.unwrap_or(Format::Json),
            )?;
            Ok((out, c.out))
        }
        Command::Demo {
            name,
            out,
            format,
            dump_spec,
        } => {
            if dump_spec {
                return Ok(dump(output::json(&demo::specs(name)), &out));
            }
            Ok((demo::run(name, format)?, out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((out, path)) => {
            let written = match &path {
                Some(p) => std::fs::write(p, &out.text),
                None => io::stdout().write_all(out.text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(5);
            }
            ExitCode::from(out.status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
