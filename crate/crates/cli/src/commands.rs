// SPDX-License-Identifier: Apache-2.0

//! One function per subcommand. Each computes everything in memory and
//! returns a table plus JSON diagnostics; writing happens afterwards.

use cgolab::cgo::{select_zeta_sequence, solve_psi};
use cgolab::estimates::{
    bilinear_ratio, default_band, localization_ratios, mq_decay_sweep, sample_field, singbound_report,
    averaged_decay, SampleProfile,
};
use cgolab::potential::{make_cutoff, potential_q};
use cgolab::recovery::{log_gradient_identity, recover_modes, smallest_lattice_k, uniqueness_gap};
use cgolab::symbol::{char_distance, make_zeta_pair, orthogonal_plane, plane_frame};
use cgolab::{Conductivity, FrequencyGrid, Zeta, ZetaPair};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{k_label, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    SolveCgo,
    SelectZeta,
    VerifyEstimates,
    AveragedDecay,
    Singbound,
    Recover,
    UniquenessGap,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::SolveCgo => "solve-cgo",
            Subcommand::SelectZeta => "select-zeta",
            Subcommand::VerifyEstimates => "verify-estimates",
            Subcommand::AveragedDecay => "averaged-decay",
            Subcommand::Singbound => "singbound",
            Subcommand::Recover => "recover",
            Subcommand::UniquenessGap => "uniqueness-gap",
        }
    }
}

/// Everything the numerics need, built and checked before any work starts.
pub struct Prepared {
    pub grid: FrequencyGrid,
    pub conds: Vec<Conductivity>,
    pub ks: Vec<Vec<f64>>,
}

fn norm(k: &[f64]) -> f64 {
    k.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Validates the configuration against the subcommand and builds the
/// conductivities. Geometry is checked here so that an infeasible request
/// fails before anything is computed or written.
pub fn prepare(cmd: Subcommand, cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let conds = cfg
        .conductivity
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            Conductivity::from_profile(&grid, spec).map_err(|e| match e {
                cgolab::Error::Domain(msg) | cgolab::Error::InvalidGrid(msg) => {
                    CliError::Config(format!("conductivity[{i}]: {msg}"))
                }
                other => other.into(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if cmd == Subcommand::UniquenessGap && conds.len() != 2 {
        return Err(CliError::Config(format!(
            "conductivity: uniqueness-gap needs exactly two profiles, got {}",
            conds.len()
        )));
    }
    let ks = match cmd {
        Subcommand::Recover | Subcommand::UniquenessGap => match &cfg.k_set {
            Some(ks) => ks.clone(),
            None => smallest_lattice_k(&grid, cfg.k_count),
        },
        Subcommand::Singbound => vec![cfg.k.clone().unwrap_or_else(|| {
            let mut axis = vec![0.0; grid.dim()];
            axis[grid.dim() - 1] = 1.0;
            axis
        })],
        _ => vec![cfg
            .k
            .clone()
            .ok_or_else(|| CliError::Config(format!("k: required by {}", cmd.name())))?],
    };
    if cmd != Subcommand::Singbound {
        for k in &ks {
            grid.lattice_index(k)?;
            if norm(k) >= 2.0 * cfg.bands[0] {
                return Err(cgolab::Error::InfeasibleGeometry(format!(
                    "|k| = {} needs every band above |k|/2, smallest band is {}",
                    norm(k),
                    cfg.bands[0]
                ))
                .into());
            }
        }
    }
    Ok(Prepared { grid, conds, ks })
}

pub fn run(cmd: Subcommand, cfg: &ExperimentConfig, prep: &Prepared) -> Result<(Table, Value), CliError> {
    match cmd {
        Subcommand::SolveCgo => solve_cgo(cfg, prep),
        Subcommand::SelectZeta => select_zeta(cfg, prep),
        Subcommand::VerifyEstimates => verify_estimates(cfg, prep),
        Subcommand::AveragedDecay => averaged(cfg, prep),
        Subcommand::Singbound => singbound(cfg, prep),
        Subcommand::Recover => recover(cfg, prep),
        Subcommand::UniquenessGap => gap(cfg, prep),
    }
}

fn pair_at(k: &[f64], s: f64, angle: f64) -> Result<ZetaPair, CliError> {
    let (p1, p2) = orthogonal_plane(k)?;
    let (e1, e2) = plane_frame(&p1, &p2, angle);
    Ok(make_zeta_pair(k, s, &e1, &e2)?)
}

fn solve_cgo(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(Table, Value), CliError> {
    let cond = &prep.conds[0];
    let k = &prep.ks[0];
    let solver = cfg.solver();
    let mut table = Table::new(&[
        "s",
        "member",
        "iterations",
        "final_ratio",
        "residual_xdot",
        "psi_norm_xdot",
        "clamped_mass",
        "clamped_modes",
        "converged",
    ]);
    let mut reports = Vec::new();
    for &s in &cfg.bands {
        let pair = pair_at(k, s, cfg.estimates.angle)?;
        for (member, zeta) in [(1usize, &pair.zeta1), (2, &pair.zeta2)] {
            let (_, rep) = solve_psi(cond, zeta, &solver)?;
            if !rep.converged {
                return Err(CliError::NotConverged {
                    s,
                    iterations: rep.iterations,
                });
            }
            table.push(vec![
                s.into(),
                member.into(),
                rep.iterations.into(),
                rep.final_ratio().unwrap_or(0.0).into(),
                rep.residual_xdot.into(),
                rep.psi_norm_xdot.into(),
                rep.clamped_mass.into(),
                rep.clamped_modes.into(),
                rep.converged.into(),
            ]);
            reports.push(json!({ "s": s, "member": member, "zeta": zeta, "report": rep }));
        }
    }
    Ok((table, json!({ "k": k, "solves": reports })))
}

fn select_zeta(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(Table, Value), CliError> {
    let sel = select_zeta_sequence(&prep.conds, &prep.ks[0], &cfg.bands, cfg.samples, cfg.seed, cfg.regularization())?;
    let mut table = Table::new(&["band", "s", "angle", "d_value", "clamped_fraction", "selected"]);
    for band in &sel {
        for sample in &band.samples {
            let chosen = sample.s == band.pair.s && sample.angle == band.angle;
            table.push(vec![
                band.lambda.into(),
                sample.s.into(),
                sample.angle.into(),
                sample.d_value.into(),
                sample.clamped_fraction.into(),
                chosen.into(),
            ]);
        }
    }
    Ok((table, json!({ "k": prep.ks[0], "bands": sel })))
}

fn verify_estimates(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(Table, Value), CliError> {
    let cond = &prep.conds[0];
    let k = &prep.ks[0];
    let est = &cfg.estimates;
    let reg = cfg.estimates_regularization(&prep.grid);
    let phi = make_cutoff(cond)?;
    let q = potential_q(cond);
    let band = default_band(&prep.grid);
    let mut table = Table::new(&["estimate", "s", "samples", "max_ratio"]);
    let mut localization = Vec::new();
    let mut bilinear = Vec::new();
    for (i, &s) in cfg.bands.iter().enumerate() {
        let pair = pair_at(k, s, est.angle)?;
        let seed = cfg.seed.wrapping_add(i as u64);
        for rep in localization_ratios(est.fields, &pair.zeta1, &phi, seed, reg)? {
            table.push(vec![rep.estimate_id.name().into(), s.into(), rep.samples.len().into(), rep.max_ratio.into()]);
            localization.push(json!({ "s": s, "report": rep }));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for j in 0..est.fields {
            let profile = SampleProfile::cycle(j);
            let u = sample_field(&prep.grid, &pair.zeta1, profile, band, reg.clamp_eps, &mut rng);
            let v = sample_field(&prep.grid, &pair.zeta2, profile, band, reg.clamp_eps, &mut rng);
            worst = worst.max(bilinear_ratio(&q, &pair, &u, &v, &phi)?);
        }
        table.push(vec!["bilinear_2_3".into(), s.into(), est.fields.into(), worst.into()]);
        bilinear.push(json!({ "s": s, "max_ratio": worst }));
    }
    let sweep = mq_decay_sweep(cond, k, &cfg.bands, est.angle, est.trials, cfg.seed, est.refine, reg)?;
    for (s, r) in sweep.s_values.iter().zip(&sweep.max_ratios) {
        table.push(vec!["mq_theta".into(), (*s).into(), est.trials.into(), (*r).into()]);
    }
    let low = low_frequency_constants(cfg, prep)?;
    Ok((
        table,
        json!({
            "k": k,
            "regularization": reg,
            "localization": localization,
            "bilinear": bilinear,
            "mq": sweep,
            "low_frequency_comparability": low,
        }),
    ))
}

/// Extremes of `|p_ζ(ξ)| / (s·d(ξ, Σ_ζ))` over lattice points with
/// `|ξ| ≤ M·s` and distance at least one grid cell.
fn low_frequency_constants(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Value, CliError> {
    let grid = &prep.grid;
    let mut rows = Vec::new();
    for &s in &cfg.bands {
        let pair = pair_at(&prep.ks[0], s, cfg.estimates.angle)?;
        let zeta: &Zeta = &pair.zeta1;
        let (mut lo, mut hi, mut count) = (f64::INFINITY, 0.0f64, 0usize);
        for idx in 0..grid.len() {
            let xi = grid.frequency(idx);
            let d = char_distance(zeta, xi);
            if grid.frequency_sq(idx).sqrt() > cfg.estimates.regime_m * s || d < grid.freq_spacing() {
                continue;
            }
            let r = zeta.symbol(xi).norm() / (s * d);
            lo = lo.min(r);
            hi = hi.max(r);
            count += 1;
        }
        rows.push(json!({ "s": s, "c1": lo, "c2": hi, "points": count }));
    }
    Ok(Value::Array(rows))
}

fn averaged(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(Table, Value), CliError> {
    let cond = &prep.conds[0];
    let est = &cfg.estimates;
    let reg = cfg.estimates_regularization(&prep.grid);
    let phi = make_cutoff(cond)?;
    let logg = cond.gamma().map(|z| Complex64::new(z.re.ln(), 0.0));
    let rep = averaged_decay(&logg, &prep.ks[0], &cfg.bands, est.quad_s, est.quad_eta, Some(&phi), reg)?;
    let mut table = Table::new(&["lambda", "a", "a_over_lambda", "flatness_l2", "flatness_h_half", "flatness_h1"]);
    for b in &rep.bands {
        table.push(vec![
            b.lambda.into(),
            b.a.into(),
            b.a_over_lambda.into(),
            b.flatness[0].into(),
            b.flatness[1].into(),
            b.flatness[2].into(),
        ]);
    }
    Ok((table, json!({ "k": prep.ks[0], "f": "log_gamma", "report": rep })))
}

fn singbound(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(Table, Value), CliError> {
    let est = &cfg.estimates;
    let (p1, p2) = orthogonal_plane(&prep.ks[0])?;
    let (e1, e2) = plane_frame(&p1, &p2, est.angle);
    let mut samples = Vec::new();
    for &s in &cfg.bands {
        let zeta = Zeta::from_frame(s, &e1, &e2)?;
        for eta in &est.eta {
            samples.push((zeta.clone(), eta.clone()));
        }
    }
    let spacing = prep.grid.freq_spacing();
    let rep = singbound_report(&samples, est.decay_order, spacing, est.radius)?;
    let mut table = Table::new(&["s", "eta", "decay_order", "value"]);
    for ((zeta, eta), sample) in samples.iter().zip(&rep.samples) {
        table.push(vec![
            zeta.s().into(),
            k_label(eta, spacing).into(),
            (est.decay_order as usize).into(),
            sample.lhs.into(),
        ]);
    }
    Ok((table, json!({ "spacing": spacing, "radius": est.radius, "report": rep })))
}

fn recover(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(Table, Value), CliError> {
    let cond = &prep.conds[0];
    let rcfg = cfg.recovery();
    let dk = prep.grid.freq_spacing();
    let mut table = Table::new(&[
        "k",
        "band",
        "recovered_re",
        "recovered_im",
        "oracle_re",
        "oracle_im",
        "err_linear",
        "err_bilinear",
        "clamped_mass",
    ]);
    let mut diagnostics = Vec::new();
    for &band in &cfg.bands {
        for (k, (rec, diag)) in prep.ks.iter().zip(recover_modes(cond, &prep.ks, band, &rcfg)?) {
            table.push(vec![
                k_label(k, dk).into(),
                band.into(),
                rec.re.into(),
                rec.im.into(),
                diag.oracle.re.into(),
                diag.oracle.im.into(),
                diag.breakdown.term_linear.norm().into(),
                diag.breakdown.term_bilinear.norm().into(),
                diag.clamped_mass.into(),
            ]);
            diagnostics.push(json!({ "k": k, "recovered": rec, "diagnostics": diag }));
        }
    }
    Ok((table, json!({ "recoveries": diagnostics })))
}

fn gap(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(Table, Value), CliError> {
    let (c1, c2) = (&prep.conds[0], &prep.conds[1]);
    let rcfg = cfg.recovery();
    let dk = prep.grid.freq_spacing();
    let mut table = Table::new(&[
        "k",
        "band",
        "pairing1_re",
        "pairing1_im",
        "pairing2_re",
        "pairing2_im",
        "gap",
        "oracle_gap",
        "error_bar",
    ]);
    let mut rows = Vec::new();
    for &band in &cfg.bands {
        for row in uniqueness_gap(c1, c2, &prep.ks, band, &rcfg)? {
            table.push(vec![
                k_label(&row.k, dk).into(),
                band.into(),
                row.pairing1.re.into(),
                row.pairing1.im.into(),
                row.pairing2.re.into(),
                row.pairing2.im.into(),
                row.gap.into(),
                row.oracle_gap.into(),
                row.error_bar.into(),
            ]);
            rows.push(json!({ "band": band, "row": row }));
        }
    }
    let identity = log_gradient_identity(c1, c2)?;
    Ok((table, json!({ "gaps": rows, "log_gradient_identity": identity })))
}
