// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::grid::Representation;

/// Errors raised by the spectral laboratory.
///
/// The variants are grouped so the experiment driver can map them onto
/// distinct exit statuses: geometry problems, singular symbols and
/// non-contractive iterations are reported separately from plain usage bugs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("representation mismatch: field must be in {expected:?} representation")]
    RepresentationMismatch { expected: Representation },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("frame error: {0}")]
    Frame(String),

    #[error("singular mode: spectral mass {mass:.3e} sits on a zero of the symbol")]
    SingularMode { mass: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fixed-point iteration is not contractive (increment ratio {ratio:.4} after {iterations} steps)")]
    NotContractive { ratio: f64, iterations: usize },

    #[error("frequency {0:?} is not on the grid lattice")]
    OffLattice(Vec<f64>),

    #[error("empty sampling: {0}")]
    EmptySampling(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for errors that come from the geometry of the request
    /// (infeasible bands, off-lattice frequencies, broken frames).
    pub fn is_geometry(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleGeometry(_) | Error::OffLattice(_) | Error::Frame(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
