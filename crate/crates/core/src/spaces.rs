// SPDX-License-Identifier: Apache-2.0

//! Symbol-weighted norms, the high/low frequency projections and the right
//! inverse of `Δ_ζ`.
//!
//! On a lattice the zero set of `p_ζ` always contains `ξ = 0` (and, for the
//! members of a [`ZetaPair`](crate::symbol::ZetaPair), also `ξ = -k`), so
//! negative powers of `|p_ζ|` need a regularization. Modes with
//! `|p_ζ(ξ)| < clamp_eps·s` are *singular*. [`SingularPolicy::Clamp`] raises
//! their magnitude to `clamp_eps·s`; [`SingularPolicy::Remove`] drops them
//! from negative-order norms and from the inverse. Every routine reports the
//! spectral mass that sat on singular modes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, Field, FrequencyGrid};
use crate::symbol::Zeta;

/// Relative size below which spectral mass counts as absent.
pub const NEGLIGIBLE_MASS: f64 = 1e-13;

/// `|p_ζ(ξ)| ≤ ZERO_SYMBOL_TOL·s²` marks an exact zero of the symbol.
const ZERO_SYMBOL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingularPolicy {
    Clamp,
    #[default]
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub clamp_eps: f64,
    #[serde(default)]
    pub policy: SingularPolicy,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            clamp_eps: 1e-6,
            policy: SingularPolicy::Remove,
        }
    }
}

impl Regularization {
    pub fn clamp(clamp_eps: f64) -> Self {
        Self {
            clamp_eps,
            policy: SingularPolicy::Clamp,
        }
    }

    pub fn remove(clamp_eps: f64) -> Self {
        Self {
            clamp_eps,
            policy: SingularPolicy::Remove,
        }
    }

    /// Same policy with a ten times smaller threshold.
    pub fn refined(&self) -> Self {
        Self {
            clamp_eps: self.clamp_eps / 10.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Homogeneous,
    Inhomogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    pub clamped_modes: usize,
    /// L² mass of the input on singular modes.
    pub clamped_mass: f64,
    /// `clamped_mass / ‖u‖_{L²}` (zero for the zero field).
    pub clamped_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InverseReport {
    pub clamped_modes: usize,
    pub clamped_mass: f64,
}

/// `p_ζ` tabulated on a grid together with its singular set.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    grid: FrequencyGrid,
    s: f64,
    reg: Regularization,
    p: Vec<Complex64>,
    singular: Vec<bool>,
    zero: Vec<bool>,
}

impl SymbolTable {
    pub fn new(zeta: &Zeta, grid: &FrequencyGrid, reg: Regularization) -> Self {
        let s = zeta.s();
        let p = zeta.symbol_table(grid);
        let floor = reg.clamp_eps * s;
        let zero_tol = ZERO_SYMBOL_TOL * s * s;
        let zero: Vec<bool> = p.iter().map(|v| v.norm() <= zero_tol).collect();
        let singular = p
            .iter()
            .zip(&zero)
            .map(|(v, &z)| z || v.norm() < floor)
            .collect();
        Self {
            grid: grid.clone(),
            s,
            reg,
            p,
            singular,
            zero,
        }
    }

    pub fn symbol(&self) -> &[Complex64] {
        &self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn regularization(&self) -> Regularization {
        self.reg
    }

    pub fn is_singular(&self, idx: usize) -> bool {
        self.singular[idx]
    }

    pub fn singular_count(&self) -> usize {
        self.singular.iter().filter(|&&b| b).count()
    }

    fn check_grid(&self, f: &Field) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// L² mass of `f` on the singular modes.
    pub fn singular_mass(&self, f: &Field) -> f64 {
        let spec = f.to_spectral();
        let sum: f64 = spec
            .values()
            .iter()
            .zip(&self.singular)
            .filter(|(_, &s)| s)
            .map(|(v, _)| v.norm_sqr())
            .sum();
        (sum * self.grid.cell_volume()).sqrt()
    }

    // Fails when clamping is disabled and `f` carries mass on an exact zero.
    fn check_zero_modes(&self, spec: &Field) -> Result<()> {
        if self.reg.clamp_eps > 0.0 {
            return Ok(());
        }
        let total: f64 = spec.values().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let on_zero: f64 = spec
            .values()
            .iter()
            .zip(&self.zero)
            .filter(|(_, &z)| z)
            .map(|(v, _)| v.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if on_zero > NEGLIGIBLE_MASS * total.max(f64::MIN_POSITIVE) {
            return Err(Error::SingularMode {
                mass: on_zero * self.grid.measure_factor(),
            });
        }
        Ok(())
    }

    /// Weight `|p_ζ|^{2b}` whose `weighted_l2` is the `Ẋ^b_ζ` norm, regularized
    /// on singular modes.
    pub fn homogeneous_weight(&self, b: f64) -> Vec<f64> {
        let floor = self.reg.clamp_eps * self.s;
        self.p
            .iter()
            .zip(&self.singular)
            .map(|(v, &sing)| {
                let mag = v.norm();
                if !sing {
                    return mag.powf(2.0 * b);
                }
                match (self.reg.policy, b < 0.0) {
                    (_, false) if self.reg.policy == SingularPolicy::Remove => mag.powf(2.0 * b),
                    (SingularPolicy::Remove, true) => 0.0,
                    (SingularPolicy::Clamp, _) if floor > 0.0 => floor.powf(2.0 * b),
                    // exact zero without clamping: mass there was checked to be negligible
                    _ => {
                        if b < 0.0 {
                            0.0
                        } else {
                            mag.powf(2.0 * b)
                        }
                    }
                }
            })
            .collect()
    }

    /// `‖u‖_{Ẋ^b_ζ}` with the table's regularization.
    pub fn xdot_norm(&self, u: &Field, b: f64) -> Result<NormReport> {
        self.check_grid(u)?;
        let spec = u.to_spectral();
        if b < 0.0 {
            self.check_zero_modes(&spec)?;
        }
        let weight = self.homogeneous_weight(b);
        let sum: f64 = spec
            .values()
            .iter()
            .zip(&weight)
            .map(|(v, w)| w * v.norm_sqr())
            .sum();
        let value = (sum * self.grid.cell_volume()).sqrt();
        let clamped_mass = self.singular_mass(&spec);
        let total = spec.l2_norm();
        Ok(NormReport {
            value,
            clamped_modes: self.singular_count(),
            clamped_mass,
            clamped_fraction: if total > 0.0 { clamped_mass / total } else { 0.0 },
        })
    }

    /// `Ẋ^b_ζ` norm over non-singular modes only, whatever the policy.
    pub fn xdot_norm_regular(&self, u: &Field, b: f64) -> f64 {
        let spec = u.to_spectral();
        let sum: f64 = spec
            .values()
            .iter()
            .zip(&self.p)
            .zip(&self.singular)
            .filter(|(_, &s)| !s)
            .map(|((v, p), _)| p.norm().powf(2.0 * b) * v.norm_sqr())
            .sum();
        (sum * self.grid.cell_volume()).sqrt()
    }

    /// `‖u‖_{X^b_ζ}` with weight `(|ζ| + |p_ζ|)^b`, `|ζ| = √2 s`.
    pub fn x_norm(&self, u: &Field, b: f64) -> f64 {
        let spec = u.to_spectral();
        let zeta_mag = std::f64::consts::SQRT_2 * self.s;
        let sum: f64 = spec
            .values()
            .iter()
            .zip(&self.p)
            .map(|(v, p)| (zeta_mag + p.norm()).powf(2.0 * b) * v.norm_sqr())
            .sum();
        (sum * self.grid.cell_volume()).sqrt()
    }

    /// Forward multiplier `p_ζ`, i.e. `Δ_ζ f`.
    pub fn forward(&self, f: &Field) -> Result<Field> {
        self.check_grid(f)?;
        Ok(apply_multiplier(f, |idx, _| self.p[idx]))
    }

    /// Right inverse: divides by `p_ζ` away from the singular set.
    pub fn invert(&self, f: &Field) -> Result<(Field, InverseReport)> {
        self.check_grid(f)?;
        let spec = f.to_spectral();
        self.check_zero_modes(&spec)?;
        let floor = self.reg.clamp_eps * self.s;
        let out = apply_multiplier(&spec, |idx, _| {
            let p = self.p[idx];
            if !self.singular[idx] {
                return p.inv();
            }
            match self.reg.policy {
                SingularPolicy::Clamp if floor > 0.0 => {
                    let mag = p.norm();
                    let phase = if mag > 0.0 { p / mag } else { Complex64::new(1.0, 0.0) };
                    (phase * floor).inv()
                }
                _ => Complex64::new(0.0, 0.0),
            }
        });
        Ok((
            out,
            InverseReport {
                clamped_modes: self.singular_count(),
                clamped_mass: self.singular_mass(&spec),
            },
        ))
    }
}

/// `Ẋ^b_ζ` norm of `u`.
pub fn xdot_norm(u: &Field, zeta: &Zeta, b: f64, reg: Regularization) -> Result<NormReport> {
    SymbolTable::new(zeta, u.grid(), reg).xdot_norm(u, b)
}

/// `X^b_ζ` norm of `u`; the inhomogeneous weight never vanishes.
pub fn x_norm(u: &Field, zeta: &Zeta, b: f64) -> f64 {
    SymbolTable::new(zeta, u.grid(), Regularization::default()).x_norm(u, b)
}

/// `Δ_ζ⁻¹ f` with the given regularization.
pub fn inverse_delta_zeta(
    f: &Field,
    zeta: &Zeta,
    reg: Regularization,
) -> Result<(Field, InverseReport)> {
    SymbolTable::new(zeta, f.grid(), reg).invert(f)
}

/// `Δ_ζ f = Δf + 2ζ·∇f` as a spectral multiplier.
pub fn apply_delta_zeta(f: &Field, zeta: &Zeta) -> Field {
    let table = zeta.symbol_table(f.grid());
    apply_multiplier(f, |idx, _| table[idx])
}

/// Smooth cutoff: 1 on `[0, 1]`, 0 on `[2, ∞)`, and on the bridge
/// `ψ(ρ-1) / (ψ(ρ-1) + ψ(2-ρ))` with `ψ(t) = exp(1 - 1/(1 - t²))`.
pub fn cutoff_chi(rho: f64) -> f64 {
    let rho = rho.abs();
    if rho <= 1.0 {
        return 1.0;
    }
    if rho >= 2.0 {
        return 0.0;
    }
    let bump = |t: f64| {
        if t.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - t * t)).exp()
        }
    };
    let a = bump(rho - 1.0);
    let b = bump(2.0 - rho);
    a / (a + b)
}

/// Low projection multiplies by `χ(ξ/(8s))`, high by `1 - χ(ξ/(8s))`.
pub fn project(u: &Field, zeta: &Zeta, part: Part) -> Field {
    let scale = 8.0 * zeta.s();
    let grid = u.grid().clone();
    apply_multiplier(u, |idx, _| {
        let chi = cutoff_chi(grid.frequency_sq(idx).sqrt() / scale);
        Complex64::new(
            match part {
                Part::Low => chi,
                Part::High => 1.0 - chi,
            },
            0.0,
        )
    })
}
