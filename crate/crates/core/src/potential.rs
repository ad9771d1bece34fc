// SPDX-License-Identifier: Apache-2.0

//! Conductivities, the Schrödinger potential `q = g⁻¹Δg` with `g = γ^{1/2}`,
//! the weak form of multiplication by `q`, cutoffs and mollification.
//!
//! `γ` is normalised to a constant background outside a support ball centred
//! in the torus. The weak form
//!
//! ```text
//! ⟨m_q u, v⟩ = −∫ ∇g · ∇(g⁻¹ u v) dx
//! ```
//!
//! never differentiates `γ` twice. With the spectral gradient it equals
//! `∫ q u v dx` on the grid to rounding, because summation by parts is exact.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{resample, spectral_gradient, spectral_laplacian, Field, FrequencyGrid};
use crate::spaces::cutoff_chi;

/// Slack on geometric comparisons against `L/4`.
const GEOMETRY_SLACK: f64 = 1e-12;

/// Allowed deviation from the background outside the support ball.
const BACKGROUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothnessClass {
    Lipschitz,
    C1,
    Smooth,
}

/// Generators for the shipped conductivity families.
///
/// `center` defaults to the torus centre and `support_radius` to `L/4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum ProfileSpec {
    /// `γ ≡ value`.
    Constant { value: f64 },
    /// `1 + a·exp(−|x − x₀|²/σ²)`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        support_radius: Option<f64>,
    },
    /// `1 + a·(1 − |x − x₀|²/R²)²₊`, C¹ but not C² at `|x − x₀| = R`.
    C1Cap {
        amplitude: f64,
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `1 + a·max(0, 1 − |x − x₀|/R)`.
    Cone {
        amplitude: f64,
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

impl ProfileSpec {
    pub fn smooth_bump() -> Self {
        ProfileSpec::Gaussian {
            amplitude: 0.05,
            width: 0.3,
            center: None,
            support_radius: None,
        }
    }

    pub fn class(&self) -> SmoothnessClass {
        match self {
            ProfileSpec::Constant { .. } | ProfileSpec::Gaussian { .. } => SmoothnessClass::Smooth,
            ProfileSpec::C1Cap { .. } => SmoothnessClass::C1,
            ProfileSpec::Cone { .. } => SmoothnessClass::Lipschitz,
        }
    }

    /// Closed-form `‖∇log γ‖_∞` of the unmollified profile.
    pub fn analytic_seminorm(&self) -> f64 {
        match *self {
            ProfileSpec::Constant { .. } => 0.0,
            ProfileSpec::Gaussian {
                amplitude, width, ..
            } => radial_seminorm(|r| {
                let e = (-(r * r) / (width * width)).exp();
                (amplitude * e, -2.0 * r / (width * width) * amplitude * e)
            }, 6.0 * width),
            ProfileSpec::C1Cap { amplitude, radius, .. } => radial_seminorm(|r| {
                let rho = r / radius;
                if rho >= 1.0 {
                    return (0.0, 0.0);
                }
                let t = 1.0 - rho * rho;
                (amplitude * t * t, -4.0 * amplitude * rho * t / radius)
            }, radius),
            // |γ'|/γ is a/R over 1 + a(1 − r/R), largest at r = R
            ProfileSpec::Cone { amplitude, radius, .. } => {
                (amplitude / radius).abs() / (1.0f64).min(1.0 + amplitude)
            }
        }
    }
}

// max |b'(r)| / (1 + b(r)) on a dense radial grid
fn radial_seminorm<F: Fn(f64) -> (f64, f64)>(b: F, extent: f64) -> f64 {
    const SAMPLES: usize = 200_000;
    (0..=SAMPLES)
        .map(|i| {
            let (v, dv) = b(extent * i as f64 / SAMPLES as f64);
            dv.abs() / (1.0 + v)
        })
        .fold(0.0, f64::max)
}

/// A positive conductivity on the torus, constant outside its support ball.
#[derive(Debug, Clone)]
pub struct Conductivity {
    gamma: Field,
    g: Field,
    support_radius: f64,
    center: Vec<f64>,
    background: f64,
    lower_bound: f64,
    class: SmoothnessClass,
    lipschitz_seminorm: f64,
    analytic_seminorm: Option<f64>,
    mollify_width: Option<f64>,
}

impl Conductivity {
    /// Wraps a sampled `γ`, centred in the torus. Fails when `γ` is not
    /// positive, not real, or not constant outside the support ball.
    pub fn new(gamma: &Field, support_radius: f64, class: SmoothnessClass) -> Result<Self> {
        let grid = gamma.grid().clone();
        Self::build(gamma, support_radius, grid.center(), class, None, None)
    }

    fn build(
        gamma: &Field,
        support_radius: f64,
        center: Vec<f64>,
        class: SmoothnessClass,
        analytic_seminorm: Option<f64>,
        mollify_width: Option<f64>,
    ) -> Result<Self> {
        let grid = gamma.grid().clone();
        check_support(&grid, support_radius, &center)?;
        let phys = gamma.to_physical();
        let scale = phys.max_abs().max(1.0);
        let mut lower = f64::INFINITY;
        for v in phys.values() {
            if v.im.abs() > 1e-12 * scale {
                return Err(Error::Domain(format!("conductivity has imaginary part {}", v.im)));
            }
            if !(v.re > 0.0) {
                return Err(Error::Domain(format!("conductivity value {} is not positive", v.re)));
            }
            lower = lower.min(v.re);
        }
        let gamma = phys.map(|v| Complex64::new(v.re, 0.0));

        // background read off the farthest point from the centre
        let far: Vec<f64> = center
            .iter()
            .map(|c| if *c >= grid.period() / 2.0 { c - grid.period() / 2.0 } else { c + grid.period() / 2.0 })
            .collect();
        let far_idx = nearest_index(&grid, &far);
        let background = gamma.values()[far_idx].re;
        let mut x = vec![0.0; grid.dim()];
        for (idx, v) in gamma.values().iter().enumerate() {
            grid.position_into(idx, &mut x);
            if torus_distance(&grid, &x, &center) > support_radius * (1.0 + GEOMETRY_SLACK)
                && (v.re - background).abs() > BACKGROUND_TOL * background
            {
                return Err(Error::Domain(format!(
                    "conductivity deviates from its background by {:.3e} outside the support ball",
                    (v.re - background).abs()
                )));
            }
        }

        let g = gamma.map(|v| Complex64::new(v.re.sqrt(), 0.0));
        let log_gamma = gamma.map(|v| Complex64::new(v.re.ln(), 0.0));
        let grads: Vec<Field> = spectral_gradient(&log_gamma)
            .into_iter()
            .map(|f| f.to_physical())
            .collect();
        let lipschitz_seminorm = (0..grid.len())
            .map(|idx| grads.iter().map(|f| f.values()[idx].re.powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);

        Ok(Self {
            gamma,
            g,
            support_radius,
            center,
            background,
            lower_bound: lower,
            class,
            lipschitz_seminorm,
            analytic_seminorm,
            mollify_width,
        })
    }

    /// Samples a profile; Lipschitz and C¹ profiles are mollified at width `2h`
    /// and their support radius grows by that width.
    pub fn from_profile(grid: &FrequencyGrid, spec: &ProfileSpec) -> Result<Self> {
        let quarter = grid.period() / 4.0;
        let class = spec.class();
        let analytic = Some(spec.analytic_seminorm());
        match spec {
            ProfileSpec::Constant { value } => {
                if !(*value > 0.0) {
                    return Err(Error::Domain(format!("constant conductivity {value} is not positive")));
                }
                let gamma = Field::constant(grid, Complex64::new(*value, 0.0));
                Self::build(&gamma, quarter, grid.center(), class, analytic, None)
            }
            ProfileSpec::Gaussian {
                amplitude,
                width,
                center,
                support_radius,
            } => {
                if !(*width > 0.0) {
                    return Err(Error::Domain(format!("bump width {width} is not positive")));
                }
                let c = resolve_center(grid, center)?;
                let (a, w2) = (*amplitude, width * width);
                let gamma = Field::from_real_fn(grid, |x| {
                    1.0 + a * (-torus_distance_sq(grid, x, &c) / w2).exp()
                });
                Self::build(&gamma, support_radius.unwrap_or(quarter), c, class, analytic, None)
            }
            ProfileSpec::C1Cap {
                amplitude,
                radius,
                center,
            } => {
                let c = resolve_center(grid, center)?;
                let (a, r) = (*amplitude, *radius);
                check_radius(r)?;
                let raw = Field::from_real_fn(grid, |x| {
                    let rho2 = torus_distance_sq(grid, x, &c) / (r * r);
                    let t = (1.0 - rho2).max(0.0);
                    1.0 + a * t * t
                });
                Self::mollified(grid, raw, r, c, class, analytic)
            }
            ProfileSpec::Cone {
                amplitude,
                radius,
                center,
            } => {
                let c = resolve_center(grid, center)?;
                let (a, r) = (*amplitude, *radius);
                check_radius(r)?;
                let raw = Field::from_real_fn(grid, |x| {
                    1.0 + a * (1.0 - torus_distance(grid, x, &c) / r).max(0.0)
                });
                Self::mollified(grid, raw, r, c, class, analytic)
            }
        }
    }

    fn mollified(
        grid: &FrequencyGrid,
        raw: Field,
        radius: f64,
        center: Vec<f64>,
        class: SmoothnessClass,
        analytic: Option<f64>,
    ) -> Result<Self> {
        let eps = 2.0 * grid.spacing();
        let smooth = mollify(&raw, eps).to_physical();
        let smooth = smooth.map(|v| Complex64::new(v.re, 0.0));
        Self::build(&smooth, radius + eps, center, class, analytic, Some(eps))
    }

    /// `c·γ`; the potential is unchanged.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Domain(format!("scale {c} is not positive")));
        }
        let gamma = self.gamma.scale(Complex64::new(c, 0.0));
        Self::build(
            &gamma,
            self.support_radius,
            self.center.clone(),
            self.class,
            self.analytic_seminorm,
            self.mollify_width,
        )
    }

    /// Reads a raw grid file and wraps it with the given support radius.
    pub fn from_raw_file(
        path: &Path,
        support_radius: f64,
        class: SmoothnessClass,
    ) -> Result<Self> {
        let (grid, values) = read_raw_grid(path)?;
        let gamma = Field::from_values(
            &grid,
            crate::grid::Representation::Physical,
            values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        )?;
        Self::new(&gamma, support_radius, class)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.gamma.grid()
    }

    pub fn gamma(&self) -> &Field {
        &self.gamma
    }

    /// `g = γ^{1/2}`.
    pub fn sqrt_gamma(&self) -> &Field {
        &self.g
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    /// `min γ`.
    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn class(&self) -> SmoothnessClass {
        self.class
    }

    /// `max |∇log γ|` over grid points, from the spectral gradient.
    pub fn lipschitz_seminorm(&self) -> f64 {
        self.lipschitz_seminorm
    }

    pub fn analytic_seminorm(&self) -> Option<f64> {
        self.analytic_seminorm
    }

    pub fn mollify_width(&self) -> Option<f64> {
        self.mollify_width
    }

    /// `g − g_∞`, which has the same derivatives as `g`.
    fn bump(&self) -> Field {
        let b = self.background.sqrt();
        self.g.map(|v| v - b)
    }

    /// True when `γ` is constant on the grid.
    pub fn is_constant(&self) -> bool {
        let first = self.gamma.values()[0].re;
        self.gamma.values().iter().all(|v| v.re == first)
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("profile radius {r} is not positive")));
    }
    Ok(())
}

fn check_support(grid: &FrequencyGrid, radius: f64, center: &[f64]) -> Result<()> {
    if center.len() != grid.dim() {
        return Err(Error::InfeasibleGeometry(format!(
            "centre has {} coordinates, grid dimension is {}",
            center.len(),
            grid.dim()
        )));
    }
    let quarter = grid.period() / 4.0;
    if !(radius > 0.0) || radius > quarter * (1.0 + GEOMETRY_SLACK) {
        return Err(Error::InfeasibleGeometry(format!(
            "support radius {radius} must lie in (0, L/4 = {quarter}]"
        )));
    }
    Ok(())
}

fn resolve_center(grid: &FrequencyGrid, center: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    let c = center.clone().unwrap_or_else(|| grid.center());
    if c.len() != grid.dim() {
        return Err(Error::InfeasibleGeometry(format!(
            "centre has {} coordinates, grid dimension is {}",
            c.len(),
            grid.dim()
        )));
    }
    Ok(c)
}

fn nearest_index(grid: &FrequencyGrid, x: &[f64]) -> usize {
    let (n, h) = (grid.n(), grid.spacing());
    x.iter().fold(0usize, |acc, &c| {
        let i = ((c / h).round() as i64).rem_euclid(n as i64) as usize;
        acc * n + i
    })
}

/// Squared minimum-image distance on the torus.
pub fn torus_distance_sq(grid: &FrequencyGrid, x: &[f64], y: &[f64]) -> f64 {
    let l = grid.period();
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let mut t = (a - b).rem_euclid(l);
            if t > l / 2.0 {
                t -= l;
            }
            t * t
        })
        .sum()
}

pub fn torus_distance(grid: &FrequencyGrid, x: &[f64], y: &[f64]) -> f64 {
    torus_distance_sq(grid, x, y).sqrt()
}

/// `q = (Δg)/g` with the spectral Laplacian; physical and real.
pub fn potential_q(cond: &Conductivity) -> Field {
    // differentiating g − g_∞ keeps transform rounding relative to the bump
    let lap = spectral_laplacian(&cond.bump()).to_physical();
    lap.zip_with(&cond.g, |a, g| Complex64::new(a.re / g.re, 0.0))
        .expect("same grid")
}

/// `−∫ ∇g · ∇(g⁻¹ u v) dx` on the grid of `cond`.
pub fn mq_bilinear(u: &Field, v: &Field, cond: &Conductivity) -> Result<Complex64> {
    let g = &cond.g;
    let w = g
        .to_physical()
        .zip_with(&u.mul(v)?, |g, uv| uv / g.re)?;
    Ok(-gradient_pairing(&cond.bump(), &w)?)
}

/// Leibniz-split form `−∫(∇g·∇g⁻¹)uv − ∫∇log g·∇(uv)`.
pub fn mq_bilinear_leibniz(u: &Field, v: &Field, cond: &Conductivity) -> Result<Complex64> {
    let g = cond.g.to_physical();
    let ginv = g.map(|x| Complex64::new(1.0 / x.re, 0.0));
    let logg = g.map(|x| Complex64::new(x.re.ln(), 0.0));
    leibniz_terms(&g, &ginv, &logg, &u.mul(v)?)
}

fn leibniz_terms(g: &Field, ginv: &Field, logg: &Field, uv: &Field) -> Result<Complex64> {
    let gg = spectral_gradient(g);
    let gi = spectral_gradient(ginv);
    let mut cross = Field::zeros(g.grid(), crate::grid::Representation::Physical);
    for (a, b) in gg.iter().zip(&gi) {
        cross = cross.add(&a.to_physical().mul(&b.to_physical())?)?;
    }
    let first = crate::grid::pairing(&cross, uv)?;
    Ok(-first - gradient_pairing(logg, uv)?)
}

// ∫ ∇a · ∇b dx
fn gradient_pairing(a: &Field, b: &Field) -> Result<Complex64> {
    let ga = spectral_gradient(a);
    let gb = spectral_gradient(b);
    let mut total = Complex64::new(0.0, 0.0);
    for (x, y) in ga.iter().zip(&gb) {
        total += crate::grid::pairing(x, y)?;
    }
    Ok(total)
}

/// Evaluates both forms of `m_q` on a grid refined by `factor`, with `g`
/// interpolated from the base grid. Inputs band-limited to a quarter of the
/// base lattice then multiply without aliasing, and the two forms agree up to
/// the fine-grid spectral tails of `g⁻¹` and `log g`.
#[derive(Debug, Clone)]
pub struct RefinedMq {
    base: FrequencyGrid,
    n_fine: usize,
    /// `|ξ|² ĝ(ξ)` and `|ξ|² (log g)^(ξ)`, with the Nyquist row of each axis dropped.
    g_weighted: Vec<Complex64>,
    logg_weighted: Vec<Complex64>,
    ginv: Field,
    /// `∇g · ∇g⁻¹`, physical.
    cross: Field,
    /// Spectral index of `−ξ`.
    negate: Vec<usize>,
}

impl RefinedMq {
    pub fn new(cond: &Conductivity, factor: usize) -> Result<Self> {
        let base = cond.grid().clone();
        let n_fine = base.n() * factor.max(1);
        // g⁻¹ and log g are taken pointwise from the interpolated g, so the
        // product rule linking the two forms holds on the fine grid
        let g = resample(&cond.g, n_fine)?.to_physical();
        let ginv = g.map(|x| Complex64::new(1.0 / x.re, 0.0));
        let logg = g.map(|x| Complex64::new(x.re.ln(), 0.0));
        let fine = g.grid().clone();
        let mut cross = Field::zeros(&fine, crate::grid::Representation::Physical);
        for (a, b) in spectral_gradient(&g).iter().zip(&spectral_gradient(&ginv)) {
            cross = cross.add(&a.to_physical().mul(&b.to_physical())?)?;
        }
        let n = n_fine as i32;
        let negate = (0..fine.len())
            .map(|idx| {
                fine.modes(idx)
                    .iter()
                    .fold(0usize, |t, &m| t * n_fine + (-m).rem_euclid(n) as usize)
            })
            .collect();
        Ok(Self {
            base,
            n_fine,
            g_weighted: gradient_weighted(&g),
            logg_weighted: gradient_weighted(&logg),
            ginv: ginv.to_physical(),
            cross,
            negate,
        })
    }

    fn lift(&self, u: &Field) -> Result<Field> {
        if u.grid() != &self.base {
            return Err(Error::GridMismatch);
        }
        Ok(resample(u, self.n_fine)?.to_physical())
    }

    // ∫ ∇a·∇b for a cached `|ξ|² â`
    fn gradient_pairing(&self, weighted: &[Complex64], b: &Field) -> Complex64 {
        let bh = b.to_spectral();
        let sum: Complex64 = weighted
            .iter()
            .zip(&self.negate)
            .map(|(a, &j)| a * bh.values()[j])
            .sum();
        sum * b.grid().cell_volume()
    }

    /// `−∫ ∇g · ∇(g⁻¹ u v) dx`.
    pub fn direct(&self, u: &Field, v: &Field) -> Result<Complex64> {
        let uv = self.lift(u)?.mul(&self.lift(v)?)?;
        let w = self.ginv.mul(&uv)?;
        Ok(-self.gradient_pairing(&self.g_weighted, &w))
    }

    /// `−∫(∇g·∇g⁻¹)uv − ∫∇log g·∇(uv)`.
    pub fn leibniz(&self, u: &Field, v: &Field) -> Result<Complex64> {
        let uv = self.lift(u)?.mul(&self.lift(v)?)?;
        let first = crate::grid::pairing(&self.cross, &uv)?;
        Ok(-first - self.gradient_pairing(&self.logg_weighted, &uv))
    }
}

// `|ξ'|² â(ξ)` where `ξ'` zeroes the Nyquist component of each axis, matching
// the spectral partials.
fn gradient_weighted(a: &Field) -> Vec<Complex64> {
    let grid = a.grid();
    let nyq = -((grid.n() / 2) as i32);
    let spec = a.to_spectral();
    (0..grid.len())
        .map(|idx| {
            let w: f64 = grid
                .frequency(idx)
                .iter()
                .zip(grid.modes(idx))
                .filter(|(_, m)| **m != nyq)
                .map(|(x, _)| x * x)
                .sum();
            spec.values()[idx] * w
        })
        .collect()
}

/// Unit-mass bump `exp(−1/(1 − |x|²))` on the unit ball, unnormalised.
fn bump_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// True when `eps` is at least two grid cells; narrower mollification is a no-op.
pub fn mollifier_active(grid: &FrequencyGrid, eps: f64) -> bool {
    eps >= 2.0 * grid.spacing() * (1.0 - 1e-12)
}

/// Convolution with the bump scaled to radius `eps`, normalised to unit mass
/// on the grid. Returns `f` unchanged (as a spectral field) when
/// `eps < 2h`.
pub fn mollify(f: &Field, eps: f64) -> Field {
    let grid = f.grid().clone();
    if !mollifier_active(&grid, eps) {
        return f.to_spectral();
    }
    let origin = vec![0.0; grid.dim()];
    let kernel = Field::from_real_fn(&grid, |x| {
        bump_profile(torus_distance_sq(&grid, x, &origin) / (eps * eps))
    });
    let mass = kernel.integral().re;
    let khat = kernel.to_spectral();
    // convolution: (f*φ)^ = (n^{d/2} h^d) f̂ φ̂ under the unitary transform
    let factor = (grid.len() as f64).sqrt() * grid.cell_volume() / mass;
    crate::grid::apply_multiplier(f, |idx, _| khat.values()[idx] * factor)
}

/// `‖∇φ‖_{L¹}` of the unit-width normalised bump in dimension `d`, so that
/// `‖∇²(f * φ_ε)‖_∞ ≤ (C/ε)‖∇f‖_∞`.
pub fn mollifier_gradient_l1(dim: usize) -> f64 {
    // radial quadrature of |φ'| r^{d-1} and φ r^{d-1}; the sphere area cancels
    const SAMPLES: usize = 100_000;
    let dr = 1.0 / SAMPLES as f64;
    let (mut grad, mut mass) = (0.0, 0.0);
    for i in 0..SAMPLES {
        let r = (i as f64 + 0.5) * dr;
        let t = 1.0 - r * r;
        let phi = (-1.0 / t).exp();
        let dphi = phi * 2.0 * r / (t * t);
        let w = r.powi(dim as i32 - 1) * dr;
        grad += dphi * w;
        mass += phi * w;
    }
    grad / mass
}

/// Smooth cutoff equal to one on a ball and supported in the ball of twice
/// the radius, both centred at `center`.
#[derive(Debug, Clone)]
pub struct CutoffField {
    pub phi: Field,
    pub radius: f64,
    pub center: Vec<f64>,
}

impl CutoffField {
    pub fn new(grid: &FrequencyGrid, radius: f64, center: &[f64]) -> Result<Self> {
        check_support(grid, radius, center)?;
        let c = center.to_vec();
        let phi = Field::from_real_fn(grid, |x| cutoff_chi(torus_distance(grid, x, &c) / radius));
        Ok(Self {
            phi,
            radius,
            center: c,
        })
    }

    /// `φ·u`, physical.
    pub fn localize(&self, u: &Field) -> Result<Field> {
        self.phi.mul(u)
    }
}

/// Cutoff adapted to the support ball of `cond`.
pub fn make_cutoff(cond: &Conductivity) -> Result<CutoffField> {
    CutoffField::new(cond.grid(), cond.support_radius, &cond.center)
}

/// Largest slope of the bridge profile of [`cutoff_chi`], so `‖∇φ_B‖_∞ ≤ C/R`.
pub fn cutoff_slope_bound() -> f64 {
    const SAMPLES: usize = 100_000;
    let dr = 1.0 / SAMPLES as f64;
    (0..SAMPLES)
        .map(|i| {
            let r = 1.0 + i as f64 * dr;
            (cutoff_chi(r) - cutoff_chi(r + dr)).abs() / dr
        })
        .fold(0.0, f64::max)
}

/// Writes `u32 d, u32 n, f64 L` followed by the `n^d` values, all
/// little-endian, in row-major order (last axis fastest).
pub fn write_raw_grid(path: &Path, grid: &FrequencyGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::InvalidGrid(format!(
            "expected {} values, got {}",
            grid.len(),
            values.len()
        )));
    }
    let mut buf = Vec::with_capacity(16 + 8 * values.len());
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.period().to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Reads the layout written by [`write_raw_grid`].
pub fn read_raw_grid(path: &Path) -> Result<(FrequencyGrid, Vec<f64>)> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 16 {
        return Err(Error::Io(format!("{}: truncated header", path.display())));
    }
    let dim = u32::from_le_bytes(buf[0..4].try_into().expect("4 bytes")) as usize;
    let n = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes")) as usize;
    let period = f64::from_le_bytes(buf[8..16].try_into().expect("8 bytes"));
    let grid = FrequencyGrid::new(dim, n, period)?;
    let body = &buf[16..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Io(format!(
            "{}: expected {} values, found {} bytes",
            path.display(),
            grid.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((grid, values))
}

/// Default torus period; makes the frequency lattice the integers.
pub const DEFAULT_PERIOD: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::pairing;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::new(3, n, DEFAULT_PERIOD).unwrap()
    }

    #[test]
    fn constant_conductivity_has_zero_potential() {
        let g = grid(16);
        let c = Conductivity::from_profile(&g, &ProfileSpec::Constant { value: 1.0 }).unwrap();
        assert_eq!(potential_q(&c).max_abs(), 0.0);
        let u = Field::from_real_fn(&g, |x| x[0].sin());
        assert_eq!(mq_bilinear(&u, &u, &c).unwrap().norm(), 0.0);
        assert!(c.is_constant());
        assert_eq!(c.lipschitz_seminorm(), 0.0);
    }

    #[test]
    fn rejects_bad_conductivities() {
        let g = grid(16);
        let neg = Field::constant(&g, Complex64::new(-1.0, 0.0));
        assert!(matches!(
            Conductivity::new(&neg, 1.0, SmoothnessClass::Smooth),
            Err(Error::Domain(_))
        ));
        let one = Field::constant(&g, Complex64::new(1.0, 0.0));
        assert!(matches!(
            Conductivity::new(&one, 2.0, SmoothnessClass::Smooth),
            Err(Error::InfeasibleGeometry(_))
        ));
        let wide = ProfileSpec::Gaussian {
            amplitude: 0.1,
            width: 1.0,
            center: None,
            support_radius: None,
        };
        assert!(matches!(Conductivity::from_profile(&g, &wide), Err(Error::Domain(_))));
    }

    #[test]
    fn bump_potential_is_radially_symmetric() {
        let g = grid(32);
        let c = Conductivity::from_profile(&g, &ProfileSpec::smooth_bump()).unwrap();
        let q = potential_q(&c);
        let n = g.n();
        let at = |i: usize, j: usize, k: usize| q.values()[(i * n + j) * n + k].re;
        // rotation by π/2 about the centre in the (x0, x1) plane
        for i in 0..n {
            for j in 0..n {
                let (ri, rj) = ((n - j) % n, i);
                assert!((at(i, j, 5) - at(ri, rj, 5)).abs() < 1e-12);
            }
        }
        assert!(q.values().iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn weak_form_matches_direct_quadrature() {
        let g = grid(32);
        let c = Conductivity::from_profile(&g, &ProfileSpec::smooth_bump()).unwrap();
        let q = potential_q(&c);
        let u = Field::from_real_fn(&g, |x| (x[0] + x[2]).cos());
        let v = Field::from_fn(&g, |x| Complex64::new(0.0, 2.0 * x[1]).exp());
        let weak = mq_bilinear(&u, &v, &c).unwrap();
        let direct = pairing(&q.mul(&u).unwrap(), &v).unwrap();
        assert!((weak - direct).norm() <= 1e-8 * direct.norm());

        let alpha = Complex64::new(0.3, -1.7);
        let scaled = mq_bilinear(&u.scale(alpha), &v, &c).unwrap();
        assert!((scaled - alpha * weak).norm() <= 1e-12 * weak.norm());
    }

    #[test]
    fn refined_forms_agree() {
        let g = grid(64);
        let c = Conductivity::from_profile(&g, &ProfileSpec::smooth_bump()).unwrap();
        let mq = RefinedMq::new(&c, 2).unwrap();
        let u = Field::from_real_fn(&g, |x| (3.0 * x[0] + x[2]).cos());
        let v = Field::from_fn(&g, |x| Complex64::new(0.0, 5.0 * x[1]).exp());
        let a = mq.direct(&u, &v).unwrap();
        let b = mq.leibniz(&u, &v).unwrap();
        assert!((a - b).norm() <= 1e-9 * a.norm(), "{a} vs {b}");
        let base = mq_bilinear(&u, &v, &c).unwrap();
        assert!((a - base).norm() <= 1e-8 * a.norm());
    }

    #[test]
    fn potential_integral_identity() {
        let g = grid(64);
        let c = Conductivity::from_profile(&g, &ProfileSpec::smooth_bump()).unwrap();
        let q = potential_q(&c);
        let gg = c.sqrt_gamma();
        let grads = spectral_gradient(gg);
        let mut energy = 0.0;
        let phys = gg.to_physical();
        for f in &grads {
            let f = f.to_physical();
            energy += f
                .values()
                .iter()
                .zip(phys.values())
                .map(|(d, g)| d.re * d.re / (g.re * g.re))
                .sum::<f64>();
        }
        energy *= g.cell_volume();
        let int_q = q.integral().re;
        assert!(energy > 0.0);
        assert!((int_q - energy).abs() <= 1e-9 * energy.max(1e-300), "{int_q} vs {energy}");
    }

    #[test]
    fn scale_invariance() {
        let g = grid(32);
        let c = Conductivity::from_profile(&g, &ProfileSpec::smooth_bump()).unwrap();
        let q1 = potential_q(&c);
        let q2 = potential_q(&c.scaled(3.7).unwrap());
        assert!(q1.sub(&q2).unwrap().max_abs() <= 1e-12 * q1.max_abs());
    }

    #[test]
    fn cutoff_contains_support() {
        // at n = 64 the truncated Gaussian spectrum leaves ~1e-7 noise in q
        let g = grid(128);
        let c = Conductivity::from_profile(&g, &ProfileSpec::smooth_bump()).unwrap();
        let phi = make_cutoff(&c).unwrap();
        let q = potential_q(&c);
        let outside = q.zip_with(&phi.phi, |q, p| q * (1.0 - p.re)).unwrap();
        assert!(outside.max_abs() <= 1e-10);
        assert!(outside.l2_norm() <= 1e-12 * q.l2_norm(), "{} {}", outside.l2_norm(), q.l2_norm());
        let centre = nearest_index(&g, &g.center());
        assert_eq!(phi.phi.values()[centre].re, 1.0);
        assert!(phi.phi.values().iter().all(|v| (0.0..=1.0).contains(&v.re)));

        let slope = cutoff_slope_bound();
        assert!(slope > 1.0 && slope < 4.0);
    }

    #[test]
    fn mollify_preserves_mass_and_constants() {
        let g = grid(32);
        let one = Field::constant(&g, Complex64::new(2.5, 0.0));
        let m = mollify(&one, 4.0 * g.spacing()).to_physical();
        assert!(m.sub(&one).unwrap().max_abs() < 1e-12);

        let f = Field::from_real_fn(&g, |x| (1.0 - (x[0] - 3.0).abs()).max(0.0));
        let before = f.integral();
        let mut prev = f64::INFINITY;
        for w in [2.0, 4.0, 8.0] {
            let m = mollify(&f, w * g.spacing());
            assert!((m.integral() - before).norm() < 1e-12 * before.norm());
            let mean = m.integral().re / g.period().powi(3);
            let dev = m.to_physical().values().iter().map(|v| (v.re - mean).abs()).fold(0.0, f64::max);
            assert!(dev < prev);
            prev = dev;
        }
        // below grid scale: no-op
        let same = mollify(&f, g.spacing()).to_physical();
        assert!(same.sub(&f).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn profiles_and_seminorms() {
        let g = grid(32);
        let cone = ProfileSpec::Cone {
            amplitude: 0.5,
            radius: 1.0,
            center: None,
        };
        assert!((cone.analytic_seminorm() - 0.5).abs() < 1e-15);
        let c = Conductivity::from_profile(&g, &cone).unwrap();
        assert_eq!(c.class(), SmoothnessClass::Lipschitz);
        assert!(c.mollify_width().is_some());
        assert!(c.lipschitz_seminorm() > 0.0 && c.lipschitz_seminorm() < 1.5 * 0.5);

        let cap = ProfileSpec::C1Cap {
            amplitude: 0.5,
            radius: 1.1,
            center: None,
        };
        let c = Conductivity::from_profile(&g, &cap).unwrap();
        let analytic = cap.analytic_seminorm();
        assert!((c.lipschitz_seminorm() - analytic).abs() < 0.2 * analytic);
    }

    #[test]
    fn raw_grid_round_trip() {
        let g = grid(8);
        let values: Vec<f64> = (0..g.len()).map(|i| 1.0 + i as f64 * 1e-3).collect();
        let dir = std::env::temp_dir().join(format!("cgolab-raw-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("gamma.bin");
        write_raw_grid(&path, &g, &values).unwrap();
        let (g2, v2) = read_raw_grid(&path).unwrap();
        assert_eq!(g2, g);
        assert_eq!(v2, values);
        fs::remove_dir_all(&dir).unwrap();
    }
}
