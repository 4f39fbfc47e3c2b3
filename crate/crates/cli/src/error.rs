use std::fmt;

/// Failures mapped onto process exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Unsupported(String),
    Degenerate(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Unsupported(_) => 3,
            CliError::Degenerate(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m)
            | CliError::Unsupported(m)
            | CliError::Numerical(m)
            | CliError::Degenerate(m) => f.write_str(m),
        }
    }
}

impl From<gaussmax::Error> for CliError {
    fn from(e: gaussmax::Error) -> Self {
        use gaussmax::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParameter { .. } | E::Dimension(_) | E::ImproperPrior(_) => CliError::Validation(msg),
            E::DegenerateReweighting { .. } => CliError::Degenerate(msg),
            _ => CliError::Numerical(msg),
        }
    }
}
