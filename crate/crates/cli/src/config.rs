// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration files.

use std::path::{Path, PathBuf};

use cgolab::potential::DEFAULT_PERIOD;
use cgolab::{BilinearSplit, FrequencyGrid, ProfileSpec, RecoveryConfig, Regularization, SingularPolicy, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Environment variable that replaces `output.dir`.
pub const OUT_ENV: &str = "CGOLAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    #[default]
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub n: usize,
    #[serde(default = "default_period")]
    pub period: f64,
}

fn default_dim() -> usize {
    3
}

fn default_period() -> f64 {
    DEFAULT_PERIOD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_true")]
    pub dealias: bool,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    200
}

fn default_true() -> bool {
    true
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            dealias: true,
        }
    }
}

/// Harness parameters shared by the estimate subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesSection {
    /// Random fields per localization sample.
    #[serde(default = "default_fields")]
    pub fields: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Angle of `η₁` in the plane orthogonal to `k`.
    #[serde(default = "default_angle")]
    pub angle: f64,
    #[serde(default = "default_refine")]
    pub refine: usize,
    #[serde(default = "default_quad")]
    pub quad_s: usize,
    #[serde(default = "default_quad")]
    pub quad_eta: usize,
    /// Decay order of `⟨ξ − η⟩^{−M}` in the singular bound.
    #[serde(default = "default_decay")]
    pub decay_order: u32,
    /// Lattice radius of the singular-bound sum.
    #[serde(default = "default_radius")]
    pub radius: i64,
    /// Shift points `η` for the singular bound.
    #[serde(default = "default_etas")]
    pub eta: Vec<Vec<f64>>,
    /// `M` in the `|ξ| ≤ M·s` low-frequency regime.
    #[serde(default = "default_regime")]
    pub regime_m: f64,
    /// Symbol floor for the harness; defaults to one lattice spacing.
    #[serde(default)]
    pub clamp_eps: Option<f64>,
}

fn default_fields() -> usize {
    32
}

fn default_trials() -> usize {
    4
}

fn default_angle() -> f64 {
    0.3
}

fn default_refine() -> usize {
    2
}

fn default_quad() -> usize {
    16
}

fn default_decay() -> u32 {
    5
}

fn default_radius() -> i64 {
    32
}

fn default_etas() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0, 0.0]]
}

fn default_regime() -> f64 {
    100.0
}

impl Default for EstimatesSection {
    fn default() -> Self {
        Self {
            fields: default_fields(),
            trials: default_trials(),
            angle: default_angle(),
            refine: default_refine(),
            quad_s: default_quad(),
            quad_eta: default_quad(),
            decay_order: default_decay(),
            radius: default_radius(),
            eta: default_etas(),
            regime_m: default_regime(),
            clamp_eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
    /// File stem; defaults to the subcommand name.
    #[serde(default)]
    pub stem: Option<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: Format::Both,
            stem: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    pub grid: GridConfig,
    /// One conductivity, or two for `uniqueness-gap`.
    pub conductivity: Vec<ProfileSpec>,
    /// Single frequency for the one-`k` subcommands.
    #[serde(default)]
    pub k: Option<Vec<f64>>,
    /// Frequencies for `recover` and `uniqueness-gap`.
    #[serde(default)]
    pub k_set: Option<Vec<Vec<f64>>>,
    /// Without `k_set`, the `k_count` smallest nonzero lattice frequencies.
    #[serde(default = "default_k_count")]
    pub k_count: usize,
    pub bands: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Symbol floor; `0` makes singular spectral mass an error.
    #[serde(default = "default_clamp")]
    pub clamp_eps: f64,
    #[serde(default)]
    pub policy: SingularPolicy,
    /// How the recovery pairing carries `e^{ix·k}`.
    #[serde(default)]
    pub split: BilinearSplit,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub estimates: EstimatesSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_k_count() -> usize {
    5
}

fn default_samples() -> usize {
    16
}

fn default_clamp() -> f64 {
    1e-6
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Applies `--seed`, `--out`, `--threads`, `--format` and the output
    /// directory override from the environment. Flags win over the
    /// environment, which wins over the file.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        out: Option<PathBuf>,
        threads: Option<usize>,
        format: Option<Format>,
        env_out: Option<PathBuf>,
    ) {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(dir) = out.or(env_out) {
            self.output.dir = dir;
        }
        if let Some(t) = threads {
            self.threads = t;
        }
        if let Some(f) = format {
            self.output.format = f;
        }
    }

    pub fn grid(&self) -> Result<FrequencyGrid, CliError> {
        FrequencyGrid::new(self.grid.dim, self.grid.n, self.grid.period)
            .map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            clamp_eps: self.clamp_eps,
            policy: self.policy,
        }
    }

    pub fn estimates_regularization(&self, grid: &FrequencyGrid) -> Regularization {
        match self.estimates.clamp_eps {
            Some(eps) => Regularization::clamp(eps),
            None => cgolab::estimates::lattice_regularization(grid),
        }
    }

    pub fn recovery(&self) -> RecoveryConfig {
        RecoveryConfig {
            solver: self.solver(),
            samples_per_band: self.samples,
            seed: self.seed,
            selection_regularization: self.regularization(),
            split: self.split,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            regularization: self.regularization(),
            dealias: self.solver.dealias,
        }
    }

    /// SHA-256 of the settings that determine the numbers. Output location,
    /// format and thread count are excluded.
    pub fn hash(&self) -> String {
        let mut view = self.clone();
        view.threads = 0;
        view.output = OutputSection::default();
        let canonical = serde_json::to_string(&view).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Field-level checks that do not need the numerics.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.conductivity.is_empty() {
            return bad("conductivity", "at least one profile is required".into());
        }
        if self.conductivity.len() > 2 {
            return bad("conductivity", format!("at most two profiles, got {}", self.conductivity.len()));
        }
        if self.bands.is_empty() {
            return bad("bands", "at least one band is required".into());
        }
        if self.bands.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return bad("bands", format!("bands must be positive, got {:?}", self.bands));
        }
        if self.bands.windows(2).any(|w| w[1] <= w[0]) {
            return bad("bands", format!("bands must be strictly increasing, got {:?}", self.bands));
        }
        if self.samples == 0 {
            return bad("samples", "must be positive".into());
        }
        if !(self.clamp_eps >= 0.0 && self.clamp_eps.is_finite()) {
            return bad("clamp_eps", format!("must be finite and non-negative, got {}", self.clamp_eps));
        }
        if !(self.solver.tol > 0.0) {
            return bad("solver.tol", format!("must be positive, got {}", self.solver.tol));
        }
        if self.solver.max_iter == 0 {
            return bad("solver.max_iter", "must be positive".into());
        }
        let dim = self.grid.dim;
        let check_k = |field: &str, k: &[f64]| {
            if k.len() != dim {
                return bad(field, format!("expected {dim} components, got {}", k.len()));
            }
            if k.iter().any(|c| !c.is_finite()) {
                return bad(field, format!("non-finite component in {k:?}"));
            }
            Ok(())
        };
        if let Some(k) = &self.k {
            check_k("k", k)?;
        }
        if let Some(ks) = &self.k_set {
            if ks.is_empty() {
                return bad("k_set", "must not be empty".into());
            }
            for k in ks {
                check_k("k_set", k)?;
            }
        } else if self.k_count == 0 {
            return bad("k_count", "must be positive".into());
        }
        let est = &self.estimates;
        if est.fields == 0 || est.trials == 0 {
            return bad("estimates", "fields and trials must be positive".into());
        }
        if est.refine < 2 {
            return bad("estimates.refine", format!("must be at least 2, got {}", est.refine));
        }
        if (est.decay_order as usize) < dim + 2 {
            return bad(
                "estimates.decay_order",
                format!("must be at least d + 2 = {}, got {}", dim + 2, est.decay_order),
            );
        }
        if est.radius <= 0 {
            return bad("estimates.radius", "must be positive".into());
        }
        for eta in &est.eta {
            check_k("estimates.eta", eta)?;
        }
        if let Some(eps) = est.clamp_eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad("estimates.clamp_eps", format!("must be positive, got {eps}"));
            }
        }
        if !(est.regime_m > 0.0) {
            return bad("estimates.regime_m", "must be positive".into());
        }
        self.grid()?;
        Ok(())
    }
}
