use dualmerit::export::ExportError;
use dualmerit::lp::{BuildError, LpError, SolveStatus};
use dualmerit::model::ModelIoError;
use dualmerit::pathway::PathwayError;
use dualmerit::pricing::PricingError;
use std::process::ExitCode;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: unreadable or invalid config, missing files, wrong flags.
    Usage(String),
    /// The LP has no optimum.
    NoOptimum(String),
    /// Solver crash, or a solution failing its numeric checks.
    Backend(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::NoOptimum(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::NoOptimum(m) | CliError::Backend(m) => m,
        }
    }

    pub fn exit(&self) -> ExitCode {
        eprintln!("error: {}", self.message());
        ExitCode::from(self.code())
    }

    fn from_lp(err: &LpError, context: String) -> CliError {
        match err {
            LpError::Build(_) => CliError::Usage(context),
            LpError::NotOptimal(SolveStatus::Infeasible | SolveStatus::Unbounded) => {
                CliError::NoOptimum(context)
            }
            _ => CliError::Backend(context),
        }
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<LpError> for CliError {
    fn from(e: LpError) -> Self {
        CliError::from_lp(&e, e.to_string())
    }
}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<PricingError> for CliError {
    fn from(e: PricingError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<PathwayError> for CliError {
    fn from(e: PathwayError) -> Self {
        match e.lp_error() {
            Some(lp) => CliError::from_lp(lp, e.to_string()),
            None => CliError::Usage(e.to_string()),
        }
    }
}
