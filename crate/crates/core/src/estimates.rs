// SPDX-License-Identifier: Apache-2.0

//! Numerical harness for the kernel, localization, bilinear, `m_q`,
//! singular-integral and averaged estimates.
//!
//! The implicit constants in `≲` are unknown, so every estimate is reported as
//! a list of `lhs / rhs` ratios and judged by its stability across a sweep in
//! `s` or `λ`. Negative powers of `|p_ζ|` use the lattice floor
//! `|p_ζ| ≥ s·Δξ` by default (see [`lattice_regularization`]).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    apply_multiplier, pairing, spectral_gradient, Field, FrequencyGrid, Representation,
};
use crate::potential::{Conductivity, CutoffField, RefinedMq};
use crate::spaces::{project, Part, Regularization, SingularPolicy, SymbolTable};
use crate::symbol::{char_distance, make_zeta_pair, orthogonal_plane, plane_frame, Zeta, ZetaPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimateId {
    #[serde(rename = "loc_2_1")]
    Loc21,
    #[serde(rename = "loc_2_2")]
    Loc22,
    #[serde(rename = "loc_2_3")]
    Loc23,
    #[serde(rename = "loc_2_4")]
    Loc24,
    #[serde(rename = "loc_2_5")]
    Loc25,
    #[serde(rename = "bilinear_2_3")]
    Bilinear23,
    #[serde(rename = "mq_theta")]
    MqTheta,
    #[serde(rename = "singbound")]
    Singbound,
    #[serde(rename = "avg_3_1")]
    Avg31,
    #[serde(rename = "avg_3_2")]
    Avg32,
}

impl EstimateId {
    pub fn name(&self) -> &'static str {
        match self {
            EstimateId::Loc21 => "loc_2_1",
            EstimateId::Loc22 => "loc_2_2",
            EstimateId::Loc23 => "loc_2_3",
            EstimateId::Loc24 => "loc_2_4",
            EstimateId::Loc25 => "loc_2_5",
            EstimateId::Bilinear23 => "bilinear_2_3",
            EstimateId::MqTheta => "mq_theta",
            EstimateId::Singbound => "singbound",
            EstimateId::Avg31 => "avg_3_1",
            EstimateId::Avg32 => "avg_3_2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSample {
    pub params: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl EstimateSample {
    /// `0/0` counts as a zero ratio.
    pub fn new(params: &[(&str, f64)], lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            lhs,
            rhs,
            ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate_id: EstimateId,
    pub samples: Vec<EstimateSample>,
    pub max_ratio: f64,
    /// Fitted exponent of the ratio against `s` or `λ`, where meaningful.
    pub trend: Option<f64>,
    /// Largest ratio after rerunning with a ten times smaller clamp.
    pub refined_max_ratio: Option<f64>,
}

impl EstimateReport {
    pub fn new(estimate_id: EstimateId, samples: Vec<EstimateSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySampling(format!("{} has no samples", estimate_id.name())));
        }
        let max_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
        Ok(Self {
            estimate_id,
            samples,
            max_ratio,
            trend: None,
            refined_max_ratio: None,
        })
    }

    pub fn with_trend(mut self, trend: Option<f64>) -> Self {
        self.trend = trend;
        self
    }
}

/// Clamp `|p_ζ|` from below at `s·Δξ`, the lattice cell scale.
pub fn lattice_regularization(grid: &FrequencyGrid) -> Regularization {
    Regularization::clamp(grid.freq_spacing())
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than two
/// positive points.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// `‖⟨ξ⟩^θ f̂‖_{L²}` with `⟨ξ⟩ = (1 + |ξ|²)^{1/2}`.
pub fn h_theta_norm(f: &Field, theta: f64) -> f64 {
    let grid = f.grid();
    let weight: Vec<f64> = (0..grid.len())
        .map(|idx| (1.0 + grid.frequency_sq(idx)).powf(theta))
        .collect();
    crate::grid::weighted_l2(f, &weight).expect("positive weight")
}

/// Spectral profile of random test fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SampleProfile {
    /// Density `max(|p_ζ|, ε·s)^{-1/2} ⟨ξ⟩^{-α}`, concentrated near `Σ_ζ`.
    Adversarial { alpha: f64 },
    White,
}

impl SampleProfile {
    /// Cycles through `α ∈ {0, 1, 2}` and white noise.
    pub fn cycle(i: usize) -> Self {
        match i % 4 {
            3 => SampleProfile::White,
            j => SampleProfile::Adversarial { alpha: j as f64 },
        }
    }
}

/// Random field with the given spectral profile, supported on `|m_j| ≤ band`.
pub fn sample_field(
    grid: &FrequencyGrid,
    zeta: &Zeta,
    profile: SampleProfile,
    band: i32,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Field {
    let table = zeta.symbol_table(grid);
    let floor = eps * zeta.s();
    let values = (0..grid.len())
        .map(|idx| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            if grid.modes(idx).iter().any(|m| m.abs() > band) {
                return Complex64::new(0.0, 0.0);
            }
            let density = match profile {
                SampleProfile::White => 1.0,
                SampleProfile::Adversarial { alpha } => {
                    table[idx].norm().max(floor).powf(-0.5)
                        * (1.0 + grid.frequency_sq(idx)).powf(-alpha / 2.0)
                }
            };
            Complex64::new(re, im) * (density / 2f64.sqrt())
        })
        .collect();
    Field::from_values(grid, Representation::Spectral, values).expect("grid length")
}

/// Default sampler band: a quarter of the lattice, so products of two
/// samples with a well-resolved coefficient stay unaliased on a doubled grid.
pub fn default_band(grid: &FrequencyGrid) -> i32 {
    (grid.n() / 4) as i32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchurReport {
    /// `(‖φ‖₁ · min{sup_ξ Σ_η J, sup_η Σ_ξ J})^{1/2}` on the lattice box.
    pub value: f64,
    pub sup_xi: f64,
    pub sup_eta: f64,
    pub phi_l1: f64,
    /// Power-iteration estimate of `‖f ↦ φ*f‖_{L²_v → L²_w}`.
    pub operator_norm: f64,
    pub within_bound: bool,
}

fn box_frequency(grid: &FrequencyGrid, a: &[usize]) -> Vec<f64> {
    let (n, dk) = (grid.n() as f64, grid.freq_spacing());
    a.iter().map(|&i| dk * (i as f64 - n / 2.0)).collect()
}

// row-major multi-index of `idx` on a lattice with `n` points per axis
fn unravel(mut idx: usize, n: usize, out: &mut [usize]) {
    for axis in (0..out.len()).rev() {
        out[axis] = idx % n;
        idx /= n;
    }
}

struct PaddedConvolver {
    pad: FrequencyGrid,
    n: usize,
    /// Padded index of each box point, in box order.
    embed: Vec<usize>,
}

impl PaddedConvolver {
    fn new(grid: &FrequencyGrid) -> Result<Self> {
        let n = grid.n();
        let pad = FrequencyGrid::new(grid.dim(), 2 * n, 1.0)?;
        let mut a = vec![0usize; grid.dim()];
        let embed = (0..grid.len())
            .map(|idx| {
                unravel(idx, n, &mut a);
                a.iter().fold(0usize, |acc, &i| acc * 2 * n + i)
            })
            .collect();
        Ok(Self { pad, n, embed })
    }

    /// Kernel `k(b)` for lattice offsets `b ∈ (−n, n)^d`, wrapped onto the padding.
    fn kernel<F: Fn(&[i64]) -> Complex64>(&self, k: F) -> Vec<Complex64> {
        let m = 2 * self.n;
        let d = self.pad.dim();
        let mut a = vec![0usize; d];
        let mut b = vec![0i64; d];
        (0..self.pad.len())
            .map(|idx| {
                unravel(idx, m, &mut a);
                for (bi, &ai) in b.iter_mut().zip(&a) {
                    *bi = if ai < self.n { ai as i64 } else { ai as i64 - m as i64 };
                }
                if b.iter().any(|&x| x.abs() >= self.n as i64) {
                    Complex64::new(0.0, 0.0)
                } else {
                    k(&b)
                }
            })
            .collect()
    }

    fn kernel_hat(&self, kernel: Vec<Complex64>) -> Field {
        Field::from_values(&self.pad, Representation::Physical, kernel)
            .expect("padded length")
            .to_spectral()
    }

    /// `(x ⊛ k)` restricted to the box, for `x` given on the box.
    fn convolve(&self, x: &[Complex64], k_hat: &Field) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.pad.len()];
        for (v, &p) in x.iter().zip(&self.embed) {
            buf[p] = *v;
        }
        let xf = Field::from_values(&self.pad, Representation::Physical, buf).expect("padded length");
        let scale = (self.pad.len() as f64).sqrt();
        let prod = xf.to_spectral().zip_with(k_hat, |a, b| a * b * scale).expect("same grid");
        let out = prod.to_physical();
        self.embed.iter().map(|&p| out.values()[p]).collect()
    }
}

/// Schur-type bound for convolution by `φ` from `L²_v` to `L²_w` on the
/// frequency lattice of `grid`, together with a power-iteration estimate of
/// the true operator norm.
pub fn schur_bound<P, V, W>(phi: P, v: V, w: W, grid: &FrequencyGrid, seed: u64) -> Result<SchurReport>
where
    P: Fn(&[f64]) -> Complex64 + Sync,
    V: Fn(&[f64]) -> f64 + Sync,
    W: Fn(&[f64]) -> f64 + Sync,
{
    const POWER_STEPS: usize = 30;
    let d = grid.dim();
    let dk = grid.freq_spacing();
    let cell = dk.powi(d as i32);
    let mut a = vec![0usize; d];
    let mut vv = Vec::with_capacity(grid.len());
    let mut ww = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        unravel(idx, grid.n(), &mut a);
        let xi = box_frequency(grid, &a);
        let (vi, wi) = (v(&xi), w(&xi));
        if !(vi > 0.0 && wi > 0.0 && vi.is_finite() && wi.is_finite()) {
            return Err(Error::InvalidWeight(format!(
                "weights must be positive and finite, got v = {vi}, w = {wi} at {xi:?}"
            )));
        }
        vv.push(vi);
        ww.push(wi);
    }

    let conv = PaddedConvolver::new(grid)?;
    let offset = |b: &[i64]| -> Vec<f64> { b.iter().map(|&x| dk * x as f64).collect() };
    let neg = |b: &[i64]| -> Vec<f64> { b.iter().map(|&x| -dk * x as f64).collect() };
    let abs_plus = conv.kernel_hat(conv.kernel(|b| Complex64::new(phi(&offset(b)).norm(), 0.0)));
    let abs_minus = conv.kernel_hat(conv.kernel(|b| Complex64::new(phi(&neg(b)).norm(), 0.0)));
    let phi_l1: f64 = conv
        .kernel(|b| Complex64::new(phi(&offset(b)).norm(), 0.0))
        .iter()
        .map(|c| c.re)
        .sum::<f64>()
        * cell;

    let as_c = |x: &[f64]| x.iter().map(|&r| Complex64::new(r, 0.0)).collect::<Vec<_>>();
    // Σ_ξ |φ(ξ−η)| w(ξ), indexed by η
    let s_eta = conv.convolve(&as_c(&ww), &abs_minus);
    // Σ_η |φ(ξ−η)| / v(η), indexed by ξ
    let inv_v: Vec<f64> = vv.iter().map(|x| 1.0 / x).collect();
    let s_xi = conv.convolve(&as_c(&inv_v), &abs_plus);
    let sup_eta = s_eta
        .iter()
        .zip(&vv)
        .map(|(c, vi)| c.re.max(0.0) * cell / vi)
        .fold(0.0, f64::max);
    let sup_xi = s_xi
        .iter()
        .zip(&ww)
        .map(|(c, wi)| c.re.max(0.0) * cell * wi)
        .fold(0.0, f64::max);
    let value = (phi_l1 * sup_xi.min(sup_eta)).sqrt();

    // S g = w^{1/2} T(v^{-1/2} g) and S* h = v^{-1/2} T*(w^{1/2} h)
    let t_hat = conv.kernel_hat(conv.kernel(|b| phi(&offset(b)) * cell));
    let t_adj_hat = conv.kernel_hat(conv.kernel(|b| phi(&neg(b)).conj() * cell));
    let sqrt_w: Vec<f64> = ww.iter().map(|x| x.sqrt()).collect();
    let isqrt_v: Vec<f64> = vv.iter().map(|x| x.sqrt().recip()).collect();
    let apply = |g: &[Complex64], pre: &[f64], post: &[f64], k: &Field| -> Vec<Complex64> {
        let x: Vec<Complex64> = g.iter().zip(pre).map(|(a, b)| a * b).collect();
        conv.convolve(&x, k).iter().zip(post).map(|(a, b)| a * b).collect()
    };
    let l2 = |g: &[Complex64]| g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g: Vec<Complex64> = (0..grid.len())
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let mut operator_norm: f64 = 0.0;
    for _ in 0..POWER_STEPS {
        let norm = l2(&g);
        if norm == 0.0 {
            break;
        }
        g.iter_mut().for_each(|c| *c /= norm);
        let sg = apply(&g, &isqrt_v, &sqrt_w, &t_hat);
        operator_norm = operator_norm.max(l2(&sg));
        g = apply(&sg, &sqrt_w, &isqrt_v, &t_adj_hat);
    }

    Ok(SchurReport {
        value,
        sup_xi,
        sup_eta,
        phi_l1,
        operator_norm,
        within_bound: operator_norm <= value * 1.05,
    })
}

/// Continuum Fourier transform of `f` divided by `(2π)^d`, read off the
/// lattice and zero away from it, as a convolution kernel on frequencies.
pub fn fourier_kernel(f: &Field) -> impl Fn(&[f64]) -> Complex64 + Sync {
    let grid = f.grid().clone();
    let spec = f.to_spectral();
    let scale = (grid.len() as f64).sqrt() * grid.cell_volume() / (2.0 * PI).powi(grid.dim() as i32);
    move |xi: &[f64]| {
        let dk = grid.freq_spacing();
        let modes: Vec<i64> = xi.iter().map(|x| (x / dk).round() as i64).collect();
        match grid.index_of_modes(&modes) {
            Some(idx) => spec.values()[idx] * scale,
            None => Complex64::new(0.0, 0.0),
        }
    }
}

fn gradient_l2(f: &Field) -> f64 {
    spectral_gradient(f)
        .iter()
        .map(|g| g.l2_norm().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Ratios of the five localization estimates over `u_samples` random fields.
/// Right-hand sides carry the stated powers of `s`.
pub fn localization_ratios(
    u_samples: usize,
    zeta: &Zeta,
    phi_b: &CutoffField,
    seed: u64,
    reg: Regularization,
) -> Result<Vec<EstimateReport>> {
    if u_samples == 0 {
        return Err(Error::EmptySampling("no localization samples".into()));
    }
    let grid = phi_b.phi.grid().clone();
    let band = default_band(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<Field> = (0..u_samples)
        .map(|i| sample_field(&grid, zeta, SampleProfile::cycle(i), band, reg.clamp_eps, &mut rng))
        .collect();
    localization_for_fields(&fields, zeta, phi_b, reg)
}

/// As [`localization_ratios`] for given fields.
pub fn localization_for_fields(
    fields: &[Field],
    zeta: &Zeta,
    phi_b: &CutoffField,
    reg: Regularization,
) -> Result<Vec<EstimateReport>> {
    let grid = phi_b.phi.grid().clone();
    let s = zeta.s();
    let table = SymbolTable::new(zeta, &grid, reg);
    let refined = SymbolTable::new(zeta, &grid, reg.refined());
    let rows: Vec<[(f64, f64); 6]> = fields
        .par_iter()
        .map(|u| -> Result<[(f64, f64); 6]> {
            let ub = phi_b.localize(u)?;
            let u_dot_half = table.xdot_norm(u, 0.5)?.value;
            let h_ub = project(&ub, zeta, Part::High);
            Ok([
                (table.xdot_norm(&ub, -0.5)?.value, table.x_norm(u, -0.5)),
                (table.x_norm(&ub, 0.5), u_dot_half),
                (ub.l2_norm(), s.powf(-0.5) * u_dot_half),
                (gradient_l2(&h_ub), u_dot_half),
                (h_ub.l2_norm(), u_dot_half / s),
                (refined.xdot_norm(&ub, -0.5)?.value, refined.x_norm(u, -0.5)),
            ])
        })
        .collect::<Result<_>>()?;
    let ids = [
        EstimateId::Loc21,
        EstimateId::Loc22,
        EstimateId::Loc23,
        EstimateId::Loc24,
        EstimateId::Loc25,
    ];
    let mut reports = Vec::with_capacity(5);
    for (j, id) in ids.iter().enumerate() {
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, r)| EstimateSample::new(&[("s", s), ("sample", i as f64)], r[j].0, r[j].1))
            .collect();
        reports.push(EstimateReport::new(*id, samples)?);
    }
    let refined_max = rows
        .iter()
        .map(|r| EstimateSample::new(&[], r[5].0, r[5].1).ratio)
        .fold(0.0, f64::max);
    reports[0].refined_max_ratio = Some(refined_max);
    Ok(reports)
}

/// `|∫ f u_B v_B| · s / (‖f‖_∞ ‖u‖_{Ẋ^{1/2}_{ζ₁}} ‖v‖_{Ẋ^{1/2}_{ζ₂}})`.
pub fn bilinear_ratio(
    f: &Field,
    pair: &ZetaPair,
    u: &Field,
    v: &Field,
    phi_b: &CutoffField,
) -> Result<f64> {
    let (s1, s2) = (pair.zeta1.s(), pair.zeta2.s());
    if (s1 - s2).abs() > 1e-12 * s1.max(s2) {
        return Err(Error::Domain(format!("|ζ₁| and |ζ₂| differ: s = {s1} vs {s2}")));
    }
    let reg = Regularization::default();
    let nu = SymbolTable::new(&pair.zeta1, u.grid(), reg).xdot_norm(u, 0.5)?.value;
    let nv = SymbolTable::new(&pair.zeta2, v.grid(), reg).xdot_norm(v, 0.5)?.value;
    let denom = f.max_abs() * nu * nv;
    if denom == 0.0 {
        return Ok(0.0);
    }
    let lhs = pairing(&f.mul(&phi_b.localize(u)?)?, &phi_b.localize(v)?)?.norm();
    Ok(lhs * s1 / denom)
}

/// Lattice sum of `⟨ξ−η⟩^{-M} / max(d(ξ, Σ_ζ), Δξ)` over the cube of
/// half-width `radius` cells around `η`.
pub fn singbound_quadrature(zeta: &Zeta, eta: &[f64], m: u32, spacing: f64, radius: i64) -> f64 {
    let d = eta.len();
    let centre: Vec<i64> = eta.iter().map(|x| (x / spacing).round() as i64).collect();
    let width = (2 * radius + 1) as usize;
    let slab = width.pow(d as u32 - 1);
    let cell = spacing.powi(d as i32);
    let partial: Vec<f64> = (0..width)
        .into_par_iter()
        .map(|first| {
            let mut xi = vec![0.0; d];
            let mut sum = 0.0;
            let mut rest = vec![0usize; d - 1];
            for j in 0..slab {
                unravel(j, width, &mut rest);
                xi[0] = spacing * (centre[0] + first as i64 - radius) as f64;
                for axis in 1..d {
                    xi[axis] = spacing * (centre[axis] + rest[axis - 1] as i64 - radius) as f64;
                }
                let diff_sq: f64 = xi.iter().zip(eta).map(|(a, b)| (a - b).powi(2)).sum();
                let japanese = (1.0 + diff_sq).powf(-(m as f64) / 2.0);
                sum += japanese / char_distance(zeta, &xi).max(spacing);
            }
            sum
        })
        .collect();
    partial.iter().sum::<f64>() * cell
}

/// Singular-bound values over sampled `(s, η)` points.
pub fn singbound_report(
    samples: &[(Zeta, Vec<f64>)],
    m: u32,
    spacing: f64,
    radius: i64,
) -> Result<EstimateReport> {
    let rows = samples
        .iter()
        .map(|(zeta, eta)| {
            let value = singbound_quadrature(zeta, eta, m, spacing, radius);
            let mut params = vec![("s", zeta.s()), ("m", m as f64)];
            let names = ["eta_0", "eta_1", "eta_2", "eta_3"];
            for (i, e) in eta.iter().enumerate().take(names.len()) {
                params.push((names[i], *e));
            }
            EstimateSample::new(&params, value, 1.0)
        })
        .collect();
    EstimateReport::new(EstimateId::Singbound, rows)
}

/// Largest `|⟨m_q u, v⟩|` over trials with `‖u‖_{Ẋ^{1/2}_{ζ₁}} = ‖v‖_{Ẋ^{1/2}_{ζ₂}} = 1`,
/// evaluated on the refined grid. Each `u` comes from the adversarial sampler
/// and `v` is the band-limited best response to it. Also returns the largest
/// relative mismatch between the direct and Leibniz-split forms.
pub fn mq_operator_ratio(
    mq: &RefinedMq,
    q: &Field,
    pair: &ZetaPair,
    trials: usize,
    seed: u64,
    reg: Regularization,
) -> Result<(EstimateReport, f64)> {
    if trials == 0 {
        return Err(Error::EmptySampling("no m_q trials".into()));
    }
    let grid = q.grid().clone();
    let band = default_band(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t1 = SymbolTable::new(&pair.zeta1, &grid, reg);
    let t2 = SymbolTable::new(&pair.zeta2, &grid, reg);
    let draws: Vec<Field> = (0..trials)
        .map(|i| sample_field(&grid, &pair.zeta1, SampleProfile::cycle(i), band, reg.clamp_eps, &mut rng))
        .collect();
    let rows: Vec<(f64, f64)> = draws
        .iter()
        .map(|u| -> Result<(f64, f64)> {
            let v = best_response(q, u, &pair.zeta2, band, reg)?;
            let nu = t1.xdot_norm(u, 0.5)?.value;
            let nv = t2.xdot_norm(&v, 0.5)?.value;
            if nu == 0.0 || nv == 0.0 {
                return Ok((0.0, 0.0));
            }
            let u = u.scale(Complex64::new(1.0 / nu, 0.0));
            let v = v.scale(Complex64::new(1.0 / nv, 0.0));
            let direct = mq.direct(&u, &v)?;
            let split = mq.leibniz(&u, &v)?;
            let scale = direct.norm().max(split.norm());
            let mismatch = if scale == 0.0 { 0.0 } else { (direct - split).norm() / scale };
            Ok((direct.norm(), mismatch))
        })
        .collect::<Result<_>>()?;
    let samples = rows
        .iter()
        .enumerate()
        .map(|(i, r)| EstimateSample::new(&[("s", pair.s), ("trial", i as f64)], r.0, 1.0))
        .collect();
    let mismatch = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok((EstimateReport::new(EstimateId::MqTheta, samples)?, mismatch))
}

/// `v` maximising `|∫ q u v|` at fixed `‖v‖_{Ẋ^{1/2}_ζ}` among fields on
/// `|m_j| ≤ band`: `v̂(ξ) = conj((qu)^(−ξ)) / max(|p_ζ(ξ)|, floor)`.
fn best_response(q: &Field, u: &Field, zeta: &Zeta, band: i32, reg: Regularization) -> Result<Field> {
    let grid = q.grid().clone();
    let qu = q.mul(&u.to_physical())?.to_spectral();
    let table = zeta.symbol_table(&grid);
    let n = grid.n() as i32;
    let values = (0..grid.len())
        .map(|idx| {
            let modes = grid.modes(idx);
            if modes.iter().any(|m| m.abs() > band) {
                return Complex64::new(0.0, 0.0);
            }
            let neg = modes
                .iter()
                .fold(0usize, |t, &m| t * grid.n() + (-m).rem_euclid(n) as usize);
            qu.values()[neg].conj() * regularized_inverse(table[idx], zeta.s(), reg)
        })
        .collect();
    Field::from_values(&grid, Representation::Spectral, values)
}
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MqSweep {
    pub s_values: Vec<f64>,
    pub max_ratios: Vec<f64>,
    /// Fitted exponent of the max ratio against `s`.
    pub exponent: Option<f64>,
    pub max_form_mismatch: f64,
    pub lipschitz_seminorm: f64,
    pub report: EstimateReport,
}

/// Runs [`mq_operator_ratio`] for pairs `(k, s, η(angle))` over `s_values`.
#[allow(clippy::too_many_arguments)]
pub fn mq_decay_sweep(
    cond: &Conductivity,
    k: &[f64],
    s_values: &[f64],
    angle: f64,
    trials: usize,
    seed: u64,
    refine: usize,
    reg: Regularization,
) -> Result<MqSweep> {
    let mq = RefinedMq::new(cond, refine)?;
    let q = crate::potential::potential_q(cond);
    let (p1, p2) = orthogonal_plane(k)?;
    let (eta1, eta2) = plane_frame(&p1, &p2, angle);
    let mut all = Vec::new();
    let mut max_ratios = Vec::new();
    let mut mismatch: f64 = 0.0;
    for (i, &s) in s_values.iter().enumerate() {
        let pair = make_zeta_pair(k, s, &eta1, &eta2)?;
        let (rep, mm) = mq_operator_ratio(&mq, &q, &pair, trials, seed.wrapping_add(i as u64), reg)?;
        max_ratios.push(rep.max_ratio);
        mismatch = mismatch.max(mm);
        all.extend(rep.samples);
    }
    let exponent = fit_exponent(s_values, &max_ratios);
    let report = EstimateReport::new(EstimateId::MqTheta, all)?.with_trend(exponent);
    Ok(MqSweep {
        s_values: s_values.to_vec(),
        max_ratios,
        exponent,
        max_form_mismatch: mismatch,
        lipschitz_seminorm: cond.lipschitz_seminorm(),
        report,
    })
}

/// Per-mode spectral mass `h^d Σ_j |ĥ_j(ξ)|²`, keeping modes above a tiny
/// relative threshold.
fn spectral_density(fields: &[Field]) -> Vec<(usize, f64)> {
    let grid = fields[0].grid().clone();
    let specs: Vec<Field> = fields.iter().map(|f| f.to_spectral()).collect();
    let dens: Vec<f64> = (0..grid.len())
        .map(|idx| specs.iter().map(|f| f.values()[idx].norm_sqr()).sum::<f64>() * grid.cell_volume())
        .collect();
    let max = dens.iter().cloned().fold(0.0, f64::max);
    dens.into_iter()
        .enumerate()
        .filter(|(_, v)| *v > 1e-30 * max && *v > 0.0)
        .collect()
}

fn regularized_inverse(p: Complex64, s: f64, reg: Regularization) -> f64 {
    let mag = p.norm();
    let floor = reg.clamp_eps * s;
    let zero = mag <= 1e-12 * s * s;
    if mag >= floor && !zero {
        return 1.0 / mag;
    }
    match reg.policy {
        SingularPolicy::Clamp if floor > 0.0 => 1.0 / floor,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAverage {
    pub lambda: f64,
    /// `A(λ)`: the `(s, η₁)` integral summed over both members of the pair.
    pub a: f64,
    pub a_over_lambda: f64,
    /// `A(λ) / (λ^{1−θ} ‖f‖²_{H^θ})` for `θ = 0, 1/2, 1`.
    pub flatness: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedDecay {
    pub bands: Vec<BandAverage>,
    pub h_theta_sq: [f64; 3],
    pub avg_3_1: EstimateReport,
    pub avg_3_2: EstimateReport,
}

/// `A(λ) = Σ_i ∫_λ^{2λ} ∫_{S¹} ‖φ_B ∇f‖²_{Ẋ^{-1/2}_{ζ_i}} dη₁ ds`, trapezoid
/// in `s` and uniform in angle. Without a cutoff, `∇f` is used directly.
#[allow(clippy::too_many_arguments)]
pub fn averaged_decay(
    f: &Field,
    k: &[f64],
    bands: &[f64],
    quad_s: usize,
    quad_eta: usize,
    phi_b: Option<&CutoffField>,
    reg: Regularization,
) -> Result<AveragedDecay> {
    if quad_s < 8 || quad_eta < 8 {
        return Err(Error::Domain(format!(
            "quadrature resolutions must be at least 8, got {quad_s} x {quad_eta}"
        )));
    }
    if bands.is_empty() {
        return Err(Error::EmptySampling("no bands".into()));
    }
    if bands.iter().any(|b| !(*b > 0.0)) || bands.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("bands must be positive and increasing".into()));
    }
    let grid = f.grid().clone();
    grid.lattice_index(k)?;
    let k_norm = k.iter().map(|c| c * c).sum::<f64>().sqrt();
    if k_norm >= 2.0 * bands[0] {
        return Err(Error::InfeasibleGeometry(format!(
            "|k| = {k_norm} is not below 2λ = {}",
            2.0 * bands[0]
        )));
    }
    let (p1, p2) = orthogonal_plane(k)?;

    let grads: Vec<Field> = spectral_gradient(f)
        .into_iter()
        .map(|g| match phi_b {
            Some(phi) => phi.localize(&g).expect("same grid"),
            None => g,
        })
        .collect();
    let density = spectral_density(&grads);

    let h_theta_sq = [
        h_theta_norm(f, 0.0).powi(2),
        h_theta_norm(f, 0.5).powi(2),
        h_theta_norm(f, 1.0).powi(2),
    ];

    let mut out = Vec::with_capacity(bands.len());
    for &lambda in bands {
        let nodes: Vec<(f64, f64, f64)> = (0..quad_s)
            .flat_map(|i| {
                let t = i as f64 / (quad_s - 1) as f64;
                let s = lambda * (1.0 + t);
                let ws = lambda / (quad_s - 1) as f64 * if i == 0 || i == quad_s - 1 { 0.5 } else { 1.0 };
                (0..quad_eta).map(move |j| (s, 2.0 * PI * j as f64 / quad_eta as f64, ws))
            })
            .collect();
        let wt = 2.0 * PI / quad_eta as f64;
        let values: Vec<f64> = nodes
            .par_iter()
            .map(|&(s, angle, ws)| -> Result<f64> {
                let (eta1, eta2) = plane_frame(&p1, &p2, angle);
                let pair = make_zeta_pair(k, s, &eta1, &eta2)?;
                let mut total = 0.0;
                for zeta in [&pair.zeta1, &pair.zeta2] {
                    for &(idx, dens) in &density {
                        let p = zeta.symbol(grid.frequency(idx));
                        total += dens * regularized_inverse(p, s, reg);
                    }
                }
                Ok(total * ws * wt)
            })
            .collect::<Result<_>>()?;
        let a: f64 = values.iter().sum();
        let flat = |i: usize, theta: f64| {
            let rhs = lambda.powf(1.0 - theta) * h_theta_sq[i];
            if rhs > 0.0 {
                a / rhs
            } else {
                0.0
            }
        };
        out.push(BandAverage {
            lambda,
            a,
            a_over_lambda: a / lambda,
            flatness: [flat(0, 0.0), flat(1, 0.5), flat(2, 1.0)],
        });
    }

    let lambdas: Vec<f64> = out.iter().map(|b| b.lambda).collect();
    let avg_3_1 = EstimateReport::new(
        EstimateId::Avg31,
        out.iter()
            .map(|b| EstimateSample::new(&[("lambda", b.lambda), ("theta", 1.0)], b.a, h_theta_sq[2]))
            .collect(),
    )?
    .with_trend(fit_exponent(&lambdas, &out.iter().map(|b| b.a).collect::<Vec<_>>()));
    let avg_3_2 = EstimateReport::new(
        EstimateId::Avg32,
        out.iter()
            .map(|b| EstimateSample::new(&[("lambda", b.lambda)], b.a, b.lambda * h_theta_sq[0]))
            .collect(),
    )?
    .with_trend(fit_exponent(&lambdas, &out.iter().map(|b| b.a_over_lambda).collect::<Vec<_>>()));
    Ok(AveragedDecay {
        bands: out,
        h_theta_sq,
        avg_3_1,
        avg_3_2,
    })
}

/// Spectral field `φ` restricted to modes with `|ξ| ≤ radius`.
pub fn band_limit(f: &Field, radius: f64) -> Field {
    let grid = f.grid().clone();
    apply_multiplier(f, |idx, _| {
        if grid.frequency_sq(idx) <= radius * radius {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_cutoff, ProfileSpec, DEFAULT_PERIOD};

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::new(3, n, DEFAULT_PERIOD).unwrap()
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(EstimateSample::new(&[], 0.0, 0.0).ratio, 0.0);
        assert_eq!(EstimateSample::new(&[], 2.0, 4.0).ratio, 0.5);
        assert!(EstimateReport::new(EstimateId::Loc21, vec![]).is_err());
        assert_eq!(EstimateId::Bilinear23.name(), "bilinear_2_3");
    }

    #[test]
    fn exponent_fit_recovers_power_law() {
        let x = [8.0, 16.0, 32.0, 64.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.8)).collect();
        assert!((fit_exponent(&x, &y).unwrap() + 0.8).abs() < 1e-12);
        assert!(fit_exponent(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn schur_with_unit_weights_is_l1_norm() {
        let g = FrequencyGrid::new(3, 16, DEFAULT_PERIOD).unwrap();
        let phi = |xi: &[f64]| Complex64::new((-xi.iter().map(|x| x * x).sum::<f64>()).exp(), 0.0);
        let rep = schur_bound(phi, |_| 1.0, |_| 1.0, &g, 1).unwrap();
        assert!((rep.value - rep.phi_l1).abs() < 1e-12 * rep.phi_l1);
        assert!((rep.sup_xi - rep.sup_eta).abs() < 1e-12 * rep.sup_xi);
        assert!(rep.within_bound && rep.operator_norm <= rep.value * 1.05);
        assert!(schur_bound(phi, |_| 0.0, |_| 1.0, &g, 1).is_err());
    }

    #[test]
    fn zero_field_has_zero_ratios() {
        let g = grid(16);
        let c = crate::potential::Conductivity::from_profile(&g, &ProfileSpec::smooth_bump()).unwrap();
        let phi = make_cutoff(&c).unwrap();
        let zeta = Zeta::from_frame(4.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let zero = Field::zeros(&g, Representation::Spectral);
        let reps = localization_for_fields(&[zero], &zeta, &phi, lattice_regularization(&g)).unwrap();
        assert!(reps.iter().all(|r| r.max_ratio == 0.0));
    }

    #[test]
    fn high_mode_gradient_ratio() {
        let g = grid(64);
        let c = crate::potential::Conductivity::from_profile(&g, &ProfileSpec::smooth_bump()).unwrap();
        let phi = make_cutoff(&c).unwrap();
        let zeta = Zeta::from_frame(1.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let xi0 = [22.0, 5.0, 0.0];
        let idx = g.lattice_index(&xi0).unwrap();
        let u = Field::single_mode(&g, idx);
        let reps = localization_for_fields(&[u], &zeta, &phi, lattice_regularization(&g)).unwrap();
        let spread = phi.phi.l2_norm() / g.period().powf(1.5);
        let r = reps[3].max_ratio / spread;
        assert!((0.5..=2.0).contains(&r), "{r}");
    }

    #[test]
    fn singbound_monotone_in_m_and_distance() {
        let zeta = Zeta::from_frame(8.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let eta = [0.0, 0.0, 0.0];
        let v5 = singbound_quadrature(&zeta, &eta, 5, 1.0, 24);
        let v10 = singbound_quadrature(&zeta, &eta, 10, 1.0, 24);
        assert!(v10 < v5);
        let mut prev = f64::INFINITY;
        for dist in [0.0, 2.0, 4.0, 8.0] {
            // move along e1, away from the plane of Σ
            let v = singbound_quadrature(&zeta, &[dist, 0.0, 0.0], 6, 1.0, 24);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn bilinear_degenerate_inputs() {
        let g = grid(16);
        let c = crate::potential::Conductivity::from_profile(&g, &ProfileSpec::smooth_bump()).unwrap();
        let phi = make_cutoff(&c).unwrap();
        let (p1, p2) = orthogonal_plane(&[0.0, 0.0, 1.0]).unwrap();
        let pair = make_zeta_pair(&[0.0, 0.0, 1.0], 4.0, &p1, &p2).unwrap();
        let u = Field::from_real_fn(&g, |x| x[0].sin());
        let zero = Field::zeros(&g, Representation::Physical);
        assert_eq!(bilinear_ratio(&zero, &pair, &u, &u, &phi).unwrap(), 0.0);
        let one = Field::constant(&g, Complex64::new(1.0, 0.0));
        assert_eq!(bilinear_ratio(&one, &pair, &zero, &u, &phi).unwrap(), 0.0);
        assert!(bilinear_ratio(&one, &pair, &u, &u, &phi).unwrap() > 0.0);
    }

    // |p_ζ(ξ₀)| for both members of the pair in closed form, integrated on a
    // quadrature four times denser than the one under test
    fn single_mode_reference(xi0: [f64; 3], lambda: f64, quad_s: usize, quad_eta: usize, floor: f64) -> f64 {
        let k = [0.0, 0.0, 1.0];
        let xi_sq: f64 = xi0.iter().map(|x| x * x).sum();
        let mut total = 0.0;
        for i in 0..quad_s {
            let s = lambda * (1.0 + i as f64 / (quad_s - 1) as f64);
            let ws = lambda / (quad_s - 1) as f64 * if i == 0 || i == quad_s - 1 { 0.5 } else { 1.0 };
            let r = (s * s - 0.25).sqrt();
            for j in 0..quad_eta {
                let t = 2.0 * PI * j as f64 / quad_eta as f64;
                let e1 = [t.cos(), t.sin(), 0.0];
                let e2 = [-t.sin(), t.cos(), 0.0];
                for sign in [1.0, -1.0] {
                    let (mut re, mut im) = (0.0, 0.0);
                    for a in 0..3 {
                        re += sign * s * e1[a] * xi0[a];
                        im += (k[a] / 2.0 + sign * r * e2[a]) * xi0[a];
                    }
                    // p = −|ξ|² + 2iζ·ξ
                    let p = Complex64::new(-xi_sq - 2.0 * im, 2.0 * re);
                    total += ws * 2.0 * PI / quad_eta as f64 / p.norm().max(floor * s);
                }
            }
        }
        total * xi_sq
    }

    #[test]
    fn averaged_decay_single_mode_oracle() {
        let g = grid(64);
        let xi0 = [12.0, 10.0, 7.0];
        let f = Field::single_mode(&g, g.lattice_index(&xi0).unwrap());
        let reg = lattice_regularization(&g);
        let rep = averaged_decay(&f, &[0.0, 0.0, 1.0], &[4.0], 16, 32, None, reg).unwrap();
        let reference = single_mode_reference(xi0, 4.0, 64, 128, reg.clamp_eps) * g.cell_volume();
        let rel = (rep.bands[0].a - reference).abs() / reference;
        assert!(rel <= 0.01, "relative error {rel}");
    }

    #[test]
    fn averaged_decay_errors_and_zero() {
        let g = grid(16);
        let zero = Field::zeros(&g, Representation::Physical);
        let reg = lattice_regularization(&g);
        let rep = averaged_decay(&zero, &[0.0, 0.0, 1.0], &[2.0, 4.0], 8, 8, None, reg).unwrap();
        assert!(rep.bands.iter().all(|b| b.a == 0.0));
        assert!(matches!(
            averaged_decay(&zero, &[0.0, 0.0, 4.0], &[2.0], 8, 8, None, reg),
            Err(Error::InfeasibleGeometry(_))
        ));
        assert!(averaged_decay(&zero, &[0.0, 0.0, 1.0], &[2.0], 4, 8, None, reg).is_err());
    }
}
