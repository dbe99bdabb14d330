//! Batch front end for `amo-core`: run plans in, CSV/JSON artifacts and a
//! manifest out.

pub mod artifact;
pub mod plan;
pub mod run;

use std::fmt;

pub use artifact::{emit, Artifact, Body, RunOutput, Status};
pub use plan::{parse_config, parse_plan, Command, RunPlan};
pub use run::run_plan;

#[derive(Debug)]
pub enum CliError {
    /// `--help`: printed on stdout, exit 0.
    Help(String),
    Usage(String),
    /// A module error, prefixed with the command (and node or grid) it came from.
    Module(String, amo_core::Error),
    Io(String),
}

impl CliError {
    /// `1` for usage, resource and module errors. Audit failures are not
    /// errors; they come back as [`Status::Fail`] and exit with `2`.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => 0,
            CliError::Module(_, amo_core::Error::Violation(_)) => 2,
            _ => 1,
        }
    }

    pub fn context(self, ctx: impl fmt::Display) -> Self {
        match self {
            CliError::Module(c, e) if c.is_empty() => CliError::Module(ctx.to_string(), e),
            CliError::Module(c, e) => CliError::Module(format!("{ctx}: {c}"), e),
            other => other,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Help(m) => f.write_str(m),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Module(c, e) if c.is_empty() => write!(f, "{e}"),
            CliError::Module(c, e) => write!(f, "{c}: {e}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<amo_core::Error> for CliError {
    fn from(e: amo_core::Error) -> Self {
        CliError::Module(String::new(), e)
    }
}
