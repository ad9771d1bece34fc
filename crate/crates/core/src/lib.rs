// SPDX-License-Identifier: Apache-2.0

//! Spectral laboratory for complex geometrical optics solutions of the
//! Calderón problem on a periodic grid.

pub mod cgo;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod potential;
pub mod recovery;
pub mod spaces;
pub mod symbol;

pub use cgo::{IterationReport, SolverConfig};
pub use error::{Error, Result};
pub use grid::{Direction, Field, FrequencyGrid, Representation};
pub use potential::{Conductivity, CutoffField, ProfileSpec, SmoothnessClass};
pub use spaces::{NormReport, Part, Regularization, SingularPolicy, SymbolTable};
pub use symbol::{Zeta, ZetaPair};
pub use estimates::{EstimateId, EstimateReport};
pub use recovery::{BilinearSplit, PairingBreakdown, RecoveryConfig};

/// Library version, embedded in experiment outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
