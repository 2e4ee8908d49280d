//! Batch driver for the alpha-density solver: config parsing, the
//! `simulate`, `portions` and `diagnose` commands and their file formats.

pub mod config;
pub mod diagnose;
pub mod output;
pub mod portions_cmd;
pub mod simulate;

use config::ConfigError;

/// Command failure, mapped to the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("{0:#}")]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Other(_) => 1,
        }
    }
}

/// Sorts a solver error into the config or numerical bucket.
pub(crate) fn classify(e: selfmix_core::Error) -> CliError {
    use selfmix_core::Error as E;
    match e {
        E::NonFinite { .. } | E::Negativity { .. } => CliError::Numerical(e.to_string()),
        E::InvalidParameter { .. } | E::UnsupportedDimension(_) | E::DegenerateTimeStep => {
            CliError::Config(ConfigError::from(e))
        }
        other => CliError::Other(anyhow::anyhow!(other)),
    }
}
