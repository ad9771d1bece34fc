// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const GEOMETRY: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const SINGULAR: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Lab(#[from] cgolab::Error),

    #[error("solver did not converge at s = {s} after {iterations} iterations")]
    NotConverged { s: f64, iterations: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use cgolab::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io(_) => exit::OTHER,
            CliError::NotConverged { .. } => exit::DIVERGENCE,
            CliError::Lab(e) if e.is_geometry() => exit::GEOMETRY,
            CliError::Lab(E::NotContractive { .. }) => exit::DIVERGENCE,
            CliError::Lab(E::SingularMode { .. }) => exit::SINGULAR,
            CliError::Lab(E::InvalidGrid(_) | E::InvalidWeight(_) | E::Domain(_) | E::EmptySampling(_)) => {
                exit::CONFIG
            }
            CliError::Lab(_) => exit::OTHER,
        }
    }

    /// Short machine-readable tag for the error JSON.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            exit::CONFIG => "config",
            exit::GEOMETRY => "geometry",
            exit::DIVERGENCE => "divergence",
            exit::SINGULAR => "singular_mode",
            _ => "other",
        }
    }
}
