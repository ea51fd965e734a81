//! Command-line workflows on top of `pacdp-core`: grid fitting, federated
//! training, privacy accounting and plot-ready reporting.
//!
//! Every workflow is a plain function so it can be driven from tests as well
//! as from the `pacdp` binary. Outputs are deterministic given the config and
//! seed, with all numbers printed at 9 significant digits.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;

use std::path::Path;

pub use commands::{cmd_account, cmd_fit, cmd_report, cmd_schedule_dump, cmd_train, Overrides};
pub use config::{parse_config, ConfigError, PolicyKind, RunConfig};
pub use output::{FitFile, Summary};

/// Failure of a CLI workflow, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub(crate) fn at(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{}: {err}", path.display()))
    }
}

impl From<pacdp_core::Error> for CliError {
    fn from(err: pacdp_core::Error) -> Self {
        match err {
            pacdp_core::Error::Config(msg) => CliError::Config(ConfigError::single(msg)),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
