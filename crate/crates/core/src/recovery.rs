// SPDX-License-Identifier: Apache-2.0

//! Recovery of Fourier modes of `q` from CGO data through the three-term
//! pairing expansion, and the log-gradient identity.
//!
//! With `ζ₁ + ζ₂ = ik` the product of the two CGO solutions is
//! `e^{ix·k}(1 + ψ₁)(1 + ψ₂)`, which is periodic, so the pairing is evaluated
//! on the torus without ever forming `e^{x·ζᵢ}`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgo::{select_zeta_sequence, solve_psi, BandSelection, IterationReport, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::{fourier_coefficient, spectral_gradient, Field, FrequencyGrid};
use crate::potential::{make_cutoff, mq_bilinear, potential_q, Conductivity, CutoffField};
use crate::spaces::Regularization;
use crate::symbol::ZetaPair;

/// Agreement required between the main term and the direct transform of `q`.
pub const MAIN_TERM_TOL: f64 = 1e-10;

/// How the bilinear term carries `e^{ix·k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BilinearSplit {
    /// `e^{ix·k/2}` on each factor when `k/2` is on the lattice, otherwise
    /// the whole phase on the first factor.
    #[default]
    Auto,
    /// `⟨m_q φe^{ix·k/2}ψ₁, φe^{ix·k/2}ψ₂⟩`; needs `k/2` on the lattice.
    Half,
    /// `⟨m_q φ²e^{ix·k}ψ₁, ψ₂⟩`.
    Whole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingBreakdown {
    pub k: Vec<f64>,
    pub pair: ZetaPair,
    pub term_main: Complex64,
    pub term_linear: Complex64,
    pub term_bilinear: Complex64,
    pub total: Complex64,
}

impl PairingBreakdown {
    /// `|term_linear| + |term_bilinear|`.
    pub fn error_bar(&self) -> f64 {
        self.term_linear.norm() + self.term_bilinear.norm()
    }
}

fn plane_wave(grid: &FrequencyGrid, k: &[f64], scale: f64) -> Field {
    Field::from_fn(grid, |x| {
        let phase: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() * scale;
        Complex64::from_polar(1.0, phase)
    })
}

fn check_pair(pair: &ZetaPair, k: &[f64]) -> Result<()> {
    let s2 = pair.s * pair.s;
    let off = pair
        .zeta1
        .value()
        .iter()
        .zip(pair.zeta2.value())
        .zip(k)
        .map(|((a, b), kk)| (a + b - Complex64::new(0.0, *kk)).norm())
        .fold(0.0, f64::max);
    if off > 1e-12 * s2.max(1.0) {
        return Err(Error::Domain(format!("ζ₁ + ζ₂ differs from ik by {off:e}")));
    }
    Ok(())
}

/// The three terms of `∫ q e^{ix·k}(1 + ψ₁)(1 + ψ₂)`, each through `m_q`.
pub fn alessandrini_terms(
    cond: &Conductivity,
    k: &[f64],
    pair: &ZetaPair,
    psi1: &Field,
    psi2: &Field,
    phi: &CutoffField,
    split: BilinearSplit,
) -> Result<PairingBreakdown> {
    let grid = cond.grid();
    if psi1.grid() != grid || psi2.grid() != grid || phi.phi.grid() != grid {
        return Err(Error::GridMismatch);
    }
    grid.lattice_index(k)?;
    check_pair(pair, k)?;
    let half: Vec<f64> = k.iter().map(|c| c / 2.0).collect();
    let half_ok = grid.lattice_index(&half).is_ok();
    let use_half = match split {
        BilinearSplit::Auto => half_ok,
        BilinearSplit::Half => {
            grid.lattice_index(&half)?;
            true
        }
        BilinearSplit::Whole => false,
    };

    let phi_f = phi.phi.to_physical();
    let wave = plane_wave(grid, k, 1.0);
    let phi_wave = phi_f.mul(&wave)?;

    // ⟨q, e^{ix·k}⟩ needs no cutoff: the constant and the plane wave are periodic
    let one = Field::constant(grid, Complex64::new(1.0, 0.0));
    let term_main = mq_bilinear(&one, &wave, cond)?;
    let oracle = fourier_coefficient(&potential_q(cond), k)?;
    if (term_main - oracle).norm() > MAIN_TERM_TOL * oracle.norm().max(1.0) {
        return Err(Error::Domain(format!(
            "main term {term_main} disagrees with the direct transform {oracle}"
        )));
    }
    let psi1 = psi1.to_physical();
    let psi2 = psi2.to_physical();
    let term_linear = mq_bilinear(&phi_wave, &psi1.add(&psi2)?, cond)?;
    let term_bilinear = if use_half {
        let half_wave = phi_f.mul(&plane_wave(grid, k, 0.5))?;
        mq_bilinear(&half_wave.mul(&psi1)?, &half_wave.mul(&psi2)?, cond)?
    } else {
        mq_bilinear(&phi_wave.mul(&phi_f)?.mul(&psi1)?, &psi2, cond)?
    };
    Ok(PairingBreakdown {
        k: k.to_vec(),
        pair: pair.clone(),
        term_main,
        term_linear,
        term_bilinear,
        total: term_main + term_linear + term_bilinear,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub solver: SolverConfig,
    pub samples_per_band: usize,
    pub seed: u64,
    pub selection_regularization: Regularization,
    pub split: BilinearSplit,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            samples_per_band: 16,
            seed: 0,
            selection_regularization: Regularization::default(),
            split: BilinearSplit::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDiagnostics {
    pub band: f64,
    pub breakdown: PairingBreakdown,
    /// `∫ q e^{ix·k}` by direct transform.
    pub oracle: Complex64,
    pub error_bar: f64,
    pub selection: BandSelection,
    pub reports: [IterationReport; 2],
    pub clamped_mass: f64,
}

fn solve_pair(cond: &Conductivity, pair: &ZetaPair, cfg: &SolverConfig) -> Result<[(Field, IterationReport); 2]> {
    let (a, b) = rayon::join(
        || solve_psi(cond, &pair.zeta1, cfg),
        || solve_psi(cond, &pair.zeta2, cfg),
    );
    Ok([a?, b?])
}

/// CGO-side estimate of `∫ q e^{ix·k}` at band `λ`, with `|term_linear| +
/// |term_bilinear|` as its error bar.
pub fn recover_fourier_mode(
    cond: &Conductivity,
    k: &[f64],
    band: f64,
    cfg: &RecoveryConfig,
) -> Result<(Complex64, RecoveryDiagnostics)> {
    let sel = select_zeta_sequence(
        &[cond.clone(), cond.clone()],
        k,
        &[band],
        cfg.samples_per_band,
        cfg.seed,
        cfg.selection_regularization,
    )?
    .remove(0);
    let [(psi1, r1), (psi2, r2)] = solve_pair(cond, &sel.pair, &cfg.solver)?;
    let phi = make_cutoff(cond)?;
    let breakdown = alessandrini_terms(cond, k, &sel.pair, &psi1, &psi2, &phi, cfg.split)?;
    let oracle = fourier_coefficient(&potential_q(cond), k)?;
    let total = breakdown.total;
    Ok((
        total,
        RecoveryDiagnostics {
            band,
            error_bar: breakdown.error_bar(),
            oracle,
            clamped_mass: r1.clamped_mass + r2.clamped_mass,
            breakdown,
            selection: sel,
            reports: [r1, r2],
        },
    ))
}

/// [`recover_fourier_mode`] for each `k`, in parallel and in input order.
pub fn recover_modes(
    cond: &Conductivity,
    ks: &[Vec<f64>],
    band: f64,
    cfg: &RecoveryConfig,
) -> Result<Vec<(Complex64, RecoveryDiagnostics)>> {
    ks.par_iter()
        .map(|k| recover_fourier_mode(cond, k, band, cfg))
        .collect()
}

/// The `count` nonzero lattice frequencies of smallest norm, one from each
/// `±k` pair (first nonzero component positive), ordered by `|k|` and then
/// lexicographically.
pub fn smallest_lattice_k(grid: &FrequencyGrid, count: usize) -> Vec<Vec<f64>> {
    let dk = grid.freq_spacing();
    let mut modes: Vec<Vec<i32>> = (0..grid.len())
        .map(|idx| grid.modes(idx).to_vec())
        .filter(|m| m.iter().find(|c| **c != 0).is_some_and(|c| *c > 0))
        .filter(|m| !m.iter().any(|c| *c == -((grid.n() / 2) as i32)))
        .collect();
    modes.sort_by_key(|m| (m.iter().map(|c| c * c).sum::<i32>(), m.clone()));
    modes
        .into_iter()
        .take(count)
        .map(|m| m.iter().map(|c| *c as f64 * dk).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub k: Vec<f64>,
    pub pairing1: Complex64,
    pub pairing2: Complex64,
    /// `|pairing₁ − pairing₂|`.
    pub gap: f64,
    /// `|q̂₁(k) − q̂₂(k)|` by direct transform.
    pub oracle_gap: f64,
    pub error_bar: f64,
}

/// Per `k`, the difference of the CGO pairings of two conductivities at a
/// shared `ζ` pair, next to the difference of their direct transforms.
pub fn uniqueness_gap(
    cond1: &Conductivity,
    cond2: &Conductivity,
    ks: &[Vec<f64>],
    band: f64,
    cfg: &RecoveryConfig,
) -> Result<Vec<GapRow>> {
    if cond1.grid() != cond2.grid() {
        return Err(Error::GridMismatch);
    }
    let q1 = potential_q(cond1);
    let q2 = potential_q(cond2);
    ks.par_iter()
        .map(|k| -> Result<GapRow> {
            let sel = select_zeta_sequence(
                &[cond1.clone(), cond2.clone()],
                k,
                &[band],
                cfg.samples_per_band,
                cfg.seed,
                cfg.selection_regularization,
            )?
            .remove(0);
            let pairing = |cond: &Conductivity| -> Result<PairingBreakdown> {
                let [(p1, _), (p2, _)] = solve_pair(cond, &sel.pair, &cfg.solver)?;
                alessandrini_terms(cond, k, &sel.pair, &p1, &p2, &make_cutoff(cond)?, cfg.split)
            };
            let (b1, b2) = (pairing(cond1)?, pairing(cond2)?);
            let oracle_gap = (fourier_coefficient(&q1, k)? - fourier_coefficient(&q2, k)?).norm();
            Ok(GapRow {
                k: k.clone(),
                pairing1: b1.total,
                pairing2: b2.total,
                gap: (b1.total - b2.total).norm(),
                oracle_gap,
                error_bar: b1.error_bar() + b2.error_bar(),
            })
        })
        .collect()
}

/// `∫ g₁g₂ |∇(log g₁ − log g₂)|² dx`.
pub fn log_gradient_identity(cond1: &Conductivity, cond2: &Conductivity) -> Result<f64> {
    if cond1.grid() != cond2.grid() {
        return Err(Error::GridMismatch);
    }
    let g1 = cond1.sqrt_gamma().to_physical();
    let g2 = cond2.sqrt_gamma().to_physical();
    let ratio = g1.zip_with(&g2, |a, b| Complex64::new(a.re.ln() - b.re.ln(), 0.0))?;
    let weight = g1.zip_with(&g2, |a, b| Complex64::new(a.re * b.re, 0.0))?;
    let mut density = Field::zeros(g1.grid(), crate::grid::Representation::Physical);
    for d in spectral_gradient(&ratio) {
        let d = d.to_physical();
        density = density.add(&d.map(|c| Complex64::new(c.norm_sqr(), 0.0)))?;
    }
    Ok(density.mul(&weight)?.integral().re)
}
