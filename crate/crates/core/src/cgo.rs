// SPDX-License-Identifier: Apache-2.0

//! CGO remainders by plain fixed-point iteration and the selection of
//! ζ-parameters along which the potentials are small.
//!
//! The remainder solves `Δψ + 2ζ·∇ψ = q(1 + ψ)`, iterated as
//! `ψ_{n+1} = Δ_ζ⁻¹(q(1 + ψ_n))` from `ψ_0 = 0`. The exponential factor of
//! the CGO solution is never formed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{product, Field, Representation};
use crate::potential::{potential_q, Conductivity};
use crate::spaces::{apply_delta_zeta, Regularization, SymbolTable};
use crate::symbol::{make_zeta_pair, orthogonal_plane, plane_frame, Zeta, ZetaPair};

/// Consecutive non-contracting steps tolerated before giving up.
const DIVERGENCE_STREAK: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub regularization: Regularization,
    /// 2/3-rule truncation of the product `q(1 + ψ)`.
    #[serde(default = "default_true")]
    pub dealias: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            regularization: Regularization::default(),
            dealias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iterations: usize,
    /// `‖Δ_ζψ − q(1+ψ)‖` in `Ẋ^{-1/2}_ζ` over non-singular modes.
    pub residual_xdot: f64,
    /// `‖ψ‖` in `Ẋ^{1/2}_ζ`.
    pub psi_norm_xdot: f64,
    /// `‖ψ_{n+1} − ψ_n‖ / ‖ψ_n − ψ_{n−1}‖` in `Ẋ^{1/2}_ζ`.
    pub contraction_estimates: Vec<f64>,
    pub increments: Vec<f64>,
    /// Spectral mass of the final right-hand side on singular modes.
    pub clamped_mass: f64,
    pub clamped_modes: usize,
    pub converged: bool,
}

impl IterationReport {
    pub fn final_ratio(&self) -> Option<f64> {
        self.contraction_estimates.last().copied()
    }
}

/// Runs the fixed-point iteration for the potential of `cond`.
pub fn solve_psi(
    cond: &Conductivity,
    zeta: &Zeta,
    config: &SolverConfig,
) -> Result<(Field, IterationReport)> {
    solve_psi_with_potential(&potential_q(cond), zeta, config)
}

/// As [`solve_psi`] with a precomputed potential.
pub fn solve_psi_with_potential(
    q: &Field,
    zeta: &Zeta,
    config: &SolverConfig,
) -> Result<(Field, IterationReport)> {
    if !(config.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {} must be positive", config.tol)));
    }
    if zeta.self_dot().norm() > 1e-10 * zeta.s() * zeta.s() {
        return Err(Error::Frame("ζ·ζ must vanish".into()));
    }
    let grid = q.grid().clone();
    let q = q.to_physical();
    let table = SymbolTable::new(zeta, &grid, config.regularization);
    let one = Complex64::new(1.0, 0.0);

    let mut psi = Field::zeros(&grid, Representation::Spectral);
    let mut increments: Vec<f64> = Vec::new();
    let mut ratios = Vec::new();
    let mut streak = 0;
    let mut clamped_mass = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=config.max_iter.max(1) {
        iterations = it;
        let rhs = product(&q, &psi.to_physical().map(|v| v + one), config.dealias)?;
        let (next, inv) = table.invert(&rhs)?;
        clamped_mass = inv.clamped_mass;
        let step = table.xdot_norm_regular(&next.sub(&psi)?, 0.5);
        if !step.is_finite() {
            return Err(Error::NotContractive {
                ratio: f64::INFINITY,
                iterations: it,
            });
        }
        if let Some(&prev) = increments.last() {
            if prev > 0.0 {
                let ratio = step / prev;
                ratios.push(ratio);
                streak = if ratio >= 1.0 { streak + 1 } else { 0 };
                if streak >= DIVERGENCE_STREAK {
                    return Err(Error::NotContractive {
                        ratio,
                        iterations: it,
                    });
                }
            }
        }
        increments.push(step);
        psi = next;
        let norm = table.xdot_norm_regular(&psi, 0.5);
        if step <= config.tol * norm.max(1.0) {
            converged = ratios.last().map_or(true, |&r| r < 1.0);
            break;
        }
    }

    let residual = residual_xdot(&q, zeta, &psi, config.regularization, config.dealias)?;
    let psi_norm = table.xdot_norm_regular(&psi, 0.5);
    converged = converged && residual <= config.tol * psi_norm.max(1.0);
    let report = IterationReport {
        iterations,
        residual_xdot: residual,
        psi_norm_xdot: psi_norm,
        contraction_estimates: ratios,
        increments,
        clamped_mass,
        clamped_modes: table.singular_count(),
        converged,
    };
    Ok((psi.to_physical(), report))
}

/// `‖Δ_ζψ − q(1 + ψ)‖_{Ẋ^{-1/2}_ζ}` over the modes that are regular for
/// `reg`, from the forward symbol and a fresh product.
pub fn residual_xdot(
    q: &Field,
    zeta: &Zeta,
    psi: &Field,
    reg: Regularization,
    dealias: bool,
) -> Result<f64> {
    let one = Complex64::new(1.0, 0.0);
    let lhs = apply_delta_zeta(psi, zeta);
    let rhs = product(&q.to_physical(), &psi.to_physical().map(|v| v + one), dealias)?;
    let res = lhs.sub(&rhs)?;
    Ok(SymbolTable::new(zeta, q.grid(), reg).xdot_norm_regular(&res, -0.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub s: f64,
    pub angle: f64,
    /// `Σ_{i,j} ‖q_i‖_{Ẋ^{-1/2}_{ζ_j}}`.
    pub d_value: f64,
    pub clamped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub lambda: f64,
    pub pair: ZetaPair,
    pub angle: f64,
    pub d_value: f64,
    pub mean_d: f64,
    /// Samples ordered by `(s, angle)`.
    pub samples: Vec<SampleRecord>,
}

/// Draws `samples_per_band` points `(s, θ)` uniformly from `[λ, 2λ] × [0, 2π)`
/// per band and keeps the one minimising the summed potential norms. Ties go
/// to the smallest `(s, θ)`, which is also the first row of the sample table.
pub fn select_zeta_sequence(
    conds: &[Conductivity],
    k: &[f64],
    bands: &[f64],
    samples_per_band: usize,
    seed: u64,
    reg: Regularization,
) -> Result<Vec<BandSelection>> {
    if conds.is_empty() {
        return Err(Error::EmptySampling("no conductivities given".into()));
    }
    if samples_per_band == 0 || bands.is_empty() {
        return Err(Error::EmptySampling("no bands or no samples per band".into()));
    }
    if bands.iter().any(|b| !(*b > 0.0)) || bands.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("bands must be positive and increasing".into()));
    }
    let grid = conds[0].grid().clone();
    if conds.iter().any(|c| c.grid() != &grid) {
        return Err(Error::GridMismatch);
    }
    grid.lattice_index(k)?;
    let k_norm = k.iter().map(|c| c * c).sum::<f64>().sqrt();
    if k_norm >= 2.0 * bands[0] {
        return Err(Error::InfeasibleGeometry(format!(
            "|k| = {k_norm} is not below 2λ = {}",
            2.0 * bands[0]
        )));
    }
    let (p1, p2) = orthogonal_plane(k)?;
    let potentials: Vec<Field> = conds.iter().map(|c| potential_q(c).to_spectral()).collect();

    let mut out = Vec::with_capacity(bands.len());
    for (b, &lambda) in bands.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
        let mut draws: Vec<(f64, f64)> = (0..samples_per_band)
            .map(|_| (rng.random_range(lambda..=2.0 * lambda), rng.random_range(0.0..2.0 * PI)))
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));

        let evaluated: Vec<(ZetaPair, SampleRecord)> = draws
            .par_iter()
            .map(|&(s, angle)| {
                let (eta1, eta2) = plane_frame(&p1, &p2, angle);
                let pair = make_zeta_pair(k, s, &eta1, &eta2)?;
                let (mut total, mut clamped, mut mass) = (0.0, 0.0, 0.0);
                for zeta in [&pair.zeta1, &pair.zeta2] {
                    let table = SymbolTable::new(zeta, &grid, reg);
                    for q in &potentials {
                        let rep = table.xdot_norm(q, -0.5)?;
                        total += rep.value;
                        clamped += rep.clamped_mass;
                        mass += q.l2_norm();
                    }
                }
                Ok((
                    pair,
                    SampleRecord {
                        s,
                        angle,
                        d_value: total,
                        clamped_fraction: if mass > 0.0 { clamped / mass } else { 0.0 },
                    },
                ))
            })
            .collect::<Result<_>>()?;

        let mut best = 0;
        for (i, (_, rec)) in evaluated.iter().enumerate() {
            if rec.d_value < evaluated[best].1.d_value {
                best = i;
            }
        }
        let mean_d =
            evaluated.iter().map(|(_, r)| r.d_value).sum::<f64>() / evaluated.len() as f64;
        let (pair, rec) = evaluated[best].clone();
        out.push(BandSelection {
            lambda,
            pair,
            angle: rec.angle,
            d_value: rec.d_value,
            mean_d,
            samples: evaluated.into_iter().map(|(_, r)| r).collect(),
        });
    }
    Ok(out)
}
