// SPDX-License-Identifier: Apache-2.0

//! Periodic grids, fields and the unitary discrete Fourier transform.
//!
//! Whole space is replaced by the torus `[0, L)^d` sampled on `n` points per
//! axis. The transform is unitary,
//!
//! ```text
//! û(ξ) = n^{-d/2} Σ_x u(x) e^{-i ξ·x},    ξ ∈ (2π/L)·{-n/2, …, n/2-1}^d,
//! ```
//!
//! so `Σ|u|² = Σ|û|²`. All L² quantities carry the cell volume `h^d`, which
//! makes them Riemann sums of the continuum integrals: `‖u‖² = h^d Σ|u(x)|²`
//! and, for a spectral weight `w`, `‖w^{1/2} û‖² = h^d Σ_ξ w(ξ)|û(ξ)|²`.
//! The factor `h^{d/2}` is exposed as [`FrequencyGrid::measure_factor`].
//!
//! Spectral differentiation zeroes the Nyquist row of the differentiated
//! axis, so the discrete gradient maps real fields to real fields and is
//! exactly skew-adjoint.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lines handed to one rayon task during the n-dimensional transform.
const LINES_PER_TASK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Physical,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

struct GridInner {
    dim: usize,
    n: usize,
    period: f64,
    len: usize,
    /// Integer lattice coordinates of every spectral index, `len * dim`.
    modes: Vec<i32>,
    /// Frequencies `(2π/L)·mode`, `len * dim`.
    xi: Vec<f64>,
    xi_sq: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// The periodic spatial lattice together with its dual frequency lattice.
///
/// Cloning is cheap; transform plans and frequency tables are shared.
#[derive(Clone)]
pub struct FrequencyGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for FrequencyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrequencyGrid")
            .field("dim", &self.inner.dim)
            .field("n", &self.inner.n)
            .field("period", &self.inner.period)
            .finish()
    }
}

impl PartialEq for FrequencyGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.dim == other.inner.dim
                && self.inner.n == other.inner.n
                && self.inner.period.to_bits() == other.inner.period.to_bits())
    }
}

impl FrequencyGrid {
    pub fn new(dim: usize, n: usize, period: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} < 2")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {n}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {period}")));
        }
        let len = n
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::InvalidGrid("grid too large".into()))?;

        let dk = 2.0 * PI / period;
        let mut modes = vec![0i32; len * dim];
        let mut xi = vec![0.0; len * dim];
        let mut xi_sq = vec![0.0; len];
        for idx in 0..len {
            let mut rem = idx;
            let mut sq = 0.0;
            for axis in (0..dim).rev() {
                let i = rem % n;
                rem /= n;
                let m = if i < n / 2 { i as i32 } else { i as i32 - n as i32 };
                modes[idx * dim + axis] = m;
                let f = dk * m as f64;
                xi[idx * dim + axis] = f;
                sq += f * f;
            }
            xi_sq[idx] = sq;
        }

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self {
            inner: Arc::new(GridInner {
                dim,
                n,
                period,
                len,
                modes,
                xi,
                xi_sq,
                forward,
                inverse,
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn period(&self) -> f64 {
        self.inner.period
    }

    /// Number of lattice points, `n^d`.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical spacing `h = L/n`.
    pub fn spacing(&self) -> f64 {
        self.inner.period / self.inner.n as f64
    }

    /// Frequency lattice spacing `2π/L`.
    pub fn freq_spacing(&self) -> f64 {
        2.0 * PI / self.inner.period
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    /// `h^{d/2}`: converts unitary coefficient sums into continuum L² norms.
    pub fn measure_factor(&self) -> f64 {
        self.cell_volume().sqrt()
    }

    /// Largest resolved frequency magnitude per axis, `π n / L`.
    pub fn max_frequency(&self) -> f64 {
        PI * self.inner.n as f64 / self.inner.period
    }

    pub fn frequency(&self, idx: usize) -> &[f64] {
        let d = self.inner.dim;
        &self.inner.xi[idx * d..(idx + 1) * d]
    }

    pub fn modes(&self, idx: usize) -> &[i32] {
        let d = self.inner.dim;
        &self.inner.modes[idx * d..(idx + 1) * d]
    }

    /// `|ξ|²` at a spectral index.
    pub fn frequency_sq(&self, idx: usize) -> f64 {
        self.inner.xi_sq[idx]
    }

    pub fn is_nyquist(&self, idx: usize, axis: usize) -> bool {
        self.modes(idx)[axis] == -(self.inner.n as i32 / 2)
    }

    pub fn touches_nyquist(&self, idx: usize) -> bool {
        let nyq = -(self.inner.n as i32 / 2);
        self.modes(idx).iter().any(|&m| m == nyq)
    }

    /// Physical coordinates of a point, written into `out`.
    pub fn position_into(&self, idx: usize, out: &mut [f64]) {
        let (d, n, h) = (self.inner.dim, self.inner.n, self.spacing());
        let mut rem = idx;
        for axis in (0..d).rev() {
            out[axis] = (rem % n) as f64 * h;
            rem /= n;
        }
    }

    pub fn position(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.position_into(idx, &mut x);
        x
    }

    /// Centre of the torus, `(L/2, …, L/2)`.
    pub fn center(&self) -> Vec<f64> {
        vec![self.period() / 2.0; self.dim()]
    }

    /// Spectral index of an integer lattice coordinate.
    pub fn index_of_modes(&self, modes: &[i64]) -> Option<usize> {
        let n = self.inner.n as i64;
        if modes.len() != self.dim() {
            return None;
        }
        let mut idx = 0usize;
        for &m in modes {
            if m < -n / 2 || m >= n / 2 {
                return None;
            }
            let i = if m < 0 { m + n } else { m };
            idx = idx * self.inner.n + i as usize;
        }
        Some(idx)
    }

    /// Integer lattice coordinates of a frequency vector, if it lies on the lattice.
    pub fn lattice_modes(&self, k: &[f64]) -> Result<Vec<i64>> {
        if k.len() != self.dim() {
            return Err(Error::OffLattice(k.to_vec()));
        }
        let dk = self.freq_spacing();
        let mut modes = Vec::with_capacity(k.len());
        for &c in k {
            let m = c / dk;
            let r = m.round();
            if (m - r).abs() > 1e-9 {
                return Err(Error::OffLattice(k.to_vec()));
            }
            modes.push(r as i64);
        }
        Ok(modes)
    }

    /// Spectral index of a frequency vector, failing if it is off the lattice
    /// or outside the resolved band.
    pub fn lattice_index(&self, k: &[f64]) -> Result<usize> {
        let modes = self.lattice_modes(k)?;
        self.index_of_modes(&modes)
            .ok_or_else(|| Error::OffLattice(k.to_vec()))
    }

    fn fft_nd(&self, data: &mut [Complex64], direction: Direction) {
        let inner = &*self.inner;
        let (n, d, len) = (inner.n, inner.dim, inner.len);
        let plan = match direction {
            Direction::Forward => &inner.forward,
            Direction::Inverse => &inner.inverse,
        };
        let mut lines = vec![Complex64::new(0.0, 0.0); len];
        for axis in 0..d {
            let stride = n.pow((d - 1 - axis) as u32);
            if stride == 1 {
                data.par_chunks_mut(n * LINES_PER_TASK)
                    .for_each(|chunk| plan.process(chunk));
                continue;
            }
            gather_lines(data, &mut lines, n, stride);
            lines
                .par_chunks_mut(n * LINES_PER_TASK)
                .for_each(|chunk| plan.process(chunk));
            scatter_lines(&lines, data, n, stride);
        }
        let scale = 1.0 / (len as f64).sqrt();
        data.par_iter_mut().for_each(|v| *v *= scale);
    }
}

// Lines along an axis with the given stride, copied into contiguous storage.
fn gather_lines(data: &[Complex64], lines: &mut [Complex64], n: usize, stride: usize) {
    let block = n * stride;
    let mut line = 0;
    for outer in (0..data.len()).step_by(block) {
        for inner in 0..stride {
            let dst = &mut lines[line * n..(line + 1) * n];
            for (j, v) in dst.iter_mut().enumerate() {
                *v = data[outer + inner + j * stride];
            }
            line += 1;
        }
    }
}

fn scatter_lines(lines: &[Complex64], data: &mut [Complex64], n: usize, stride: usize) {
    let block = n * stride;
    let mut line = 0;
    for outer in (0..data.len()).step_by(block) {
        for inner in 0..stride {
            let src = &lines[line * n..(line + 1) * n];
            for (j, v) in src.iter().enumerate() {
                data[outer + inner + j * stride] = *v;
            }
            line += 1;
        }
    }
}

/// A complex scalar function on the grid, held in one representation.
#[derive(Clone, Debug)]
pub struct Field {
    grid: FrequencyGrid,
    repr: Representation,
    values: Vec<Complex64>,
}

impl Field {
    pub fn from_values(
        grid: &FrequencyGrid,
        repr: Representation,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            repr,
            values,
        })
    }

    pub fn zeros(grid: &FrequencyGrid, repr: Representation) -> Self {
        Self {
            grid: grid.clone(),
            repr,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn constant(grid: &FrequencyGrid, value: Complex64) -> Self {
        Self {
            grid: grid.clone(),
            repr: Representation::Physical,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x)` at every grid point.
    pub fn from_fn<F>(grid: &FrequencyGrid, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let d = grid.dim();
        let values = (0..grid.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; d],
                |x, idx| {
                    grid.position_into(idx, x);
                    f(x)
                },
            )
            .collect();
        Self {
            grid: grid.clone(),
            repr: Representation::Physical,
            values,
        }
    }

    pub fn from_real_fn<F>(grid: &FrequencyGrid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    /// Spectral field built from `f(idx, ξ)`.
    pub fn spectral_from_fn<F>(grid: &FrequencyGrid, f: F) -> Self
    where
        F: Fn(usize, &[f64]) -> Complex64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|idx| f(idx, grid.frequency(idx)))
            .collect();
        Self {
            grid: grid.clone(),
            repr: Representation::Spectral,
            values,
        }
    }

    /// Spectral field with a single unit coefficient at `idx`.
    pub fn single_mode(grid: &FrequencyGrid, idx: usize) -> Self {
        let mut field = Self::zeros(grid, Representation::Spectral);
        field.values[idx] = Complex64::new(1.0, 0.0);
        field
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Unitary transform in the requested direction. Asking for the
    /// direction the field is already in is a usage error.
    pub fn transform(&self, direction: Direction) -> Result<Field> {
        let expected = match direction {
            Direction::Forward => Representation::Physical,
            Direction::Inverse => Representation::Spectral,
        };
        if self.repr != expected {
            return Err(Error::RepresentationMismatch { expected });
        }
        let mut values = self.values.clone();
        self.grid.fft_nd(&mut values, direction);
        Ok(Field {
            grid: self.grid.clone(),
            repr: match direction {
                Direction::Forward => Representation::Spectral,
                Direction::Inverse => Representation::Physical,
            },
            values,
        })
    }

    /// Spectral copy, transforming only when needed.
    pub fn to_spectral(&self) -> Field {
        match self.repr {
            Representation::Spectral => self.clone(),
            Representation::Physical => self.transform(Direction::Forward).expect("physical field"),
        }
    }

    pub fn to_physical(&self) -> Field {
        match self.repr {
            Representation::Physical => self.clone(),
            Representation::Spectral => self.transform(Direction::Inverse).expect("spectral field"),
        }
    }

    /// Continuum L² norm; identical in both representations.
    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (sum * self.grid.cell_volume()).sqrt()
    }

    /// `∫ f dx` over the torus.
    pub fn integral(&self) -> Complex64 {
        match self.repr {
            Representation::Physical => {
                let sum: Complex64 = self.values.iter().sum();
                sum * self.grid.cell_volume()
            }
            Representation::Spectral => {
                // û(0) = n^{-d/2} Σ f
                self.values[0] * (self.grid.len() as f64).sqrt() * self.grid.cell_volume()
            }
        }
    }

    /// Largest pointwise modulus in physical space.
    pub fn max_abs(&self) -> f64 {
        let phys = self.to_physical();
        phys.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn map<F>(&self, f: F) -> Field
    where
        F: Fn(Complex64) -> Complex64 + Sync,
    {
        Field {
            grid: self.grid.clone(),
            repr: self.repr,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    /// Combines two fields of the same grid pointwise, in the representation of `self`.
    pub fn zip_with<F>(&self, other: &Field, f: F) -> Result<Field>
    where
        F: Fn(Complex64, Complex64) -> Complex64 + Sync,
    {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let other = match (self.repr, other.repr) {
            (a, b) if a == b => std::borrow::Cow::Borrowed(other),
            (Representation::Physical, _) => std::borrow::Cow::Owned(other.to_physical()),
            (Representation::Spectral, _) => std::borrow::Cow::Owned(other.to_spectral()),
        };
        Ok(Field {
            grid: self.grid.clone(),
            repr: self.repr,
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, c: Complex64) -> Field {
        self.map(|v| v * c)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product formed in physical space, without truncation.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.to_physical().zip_with(other, |a, b| a * b)
    }

    pub fn re_max(&self) -> f64 {
        self.to_physical()
            .values
            .iter()
            .map(|v| v.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Free-function form of [`Field::transform`].
pub fn transform(f: &Field, direction: Direction) -> Result<Field> {
    f.transform(direction)
}

/// Applies a spectral multiplier `m(idx, ξ)`; the result is spectral.
pub fn apply_multiplier<F>(f: &Field, m: F) -> Field
where
    F: Fn(usize, &[f64]) -> Complex64 + Sync,
{
    let spec = f.to_spectral();
    let grid = spec.grid.clone();
    let values = spec
        .values
        .par_iter()
        .enumerate()
        .map(|(idx, &v)| v * m(idx, grid.frequency(idx)))
        .collect();
    Field {
        grid,
        repr: Representation::Spectral,
        values,
    }
}

/// Partial derivative along `axis` with multiplier `iξ_axis` (Nyquist zeroed).
pub fn spectral_partial(f: &Field, axis: usize) -> Field {
    let grid = f.grid.clone();
    apply_multiplier(f, |idx, xi| {
        if grid.is_nyquist(idx, axis) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, xi[axis])
        }
    })
}

/// Gradient as `d` spectral fields. Physical inputs are transformed first.
pub fn spectral_gradient(f: &Field) -> Vec<Field> {
    let spec = f.to_spectral();
    (0..f.grid.dim())
        .map(|axis| spectral_partial(&spec, axis))
        .collect()
}

/// Laplacian as the composition of the spectral partials, so it is the exact
/// negative adjoint-square of [`spectral_gradient`].
pub fn spectral_laplacian(f: &Field) -> Field {
    let grid = f.grid.clone();
    apply_multiplier(f, |idx, xi| {
        let mut sym = 0.0;
        for (axis, &c) in xi.iter().enumerate() {
            if !grid.is_nyquist(idx, axis) {
                sym -= c * c;
            }
        }
        Complex64::new(sym, 0.0)
    })
}

/// `(h^d Σ_ξ w(ξ) |û(ξ)|²)^{1/2}` for a non-negative weight on the lattice.
pub fn weighted_l2(f: &Field, weight: &[f64]) -> Result<f64> {
    if weight.len() != f.grid.len() {
        return Err(Error::InvalidWeight(format!(
            "weight has {} entries, grid has {}",
            weight.len(),
            f.grid.len()
        )));
    }
    if let Some(bad) = weight.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::InvalidWeight(format!("entry {bad} is not non-negative")));
    }
    let spec = f.to_spectral();
    let sum: f64 = spec
        .values
        .iter()
        .zip(weight)
        .map(|(v, w)| w * v.norm_sqr())
        .sum();
    Ok((sum * f.grid.cell_volume()).sqrt())
}

/// Zeroes every mode with `|m_j| > n/3` on some axis (the 2/3 rule).
pub fn dealias(f: &Field) -> Field {
    let grid = f.grid.clone();
    let cut = (grid.n() / 3) as i32;
    apply_multiplier(f, |idx, _| {
        if grid.modes(idx).iter().any(|m| m.abs() > cut) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// Pointwise product formed in physical space, optionally truncated by the
/// 2/3 rule afterwards. The result is physical.
pub fn product(a: &Field, b: &Field, truncate: bool) -> Result<Field> {
    let p = a.mul(b)?;
    Ok(if truncate { dealias(&p).to_physical() } else { p })
}

/// `∫ a b dx` (bilinear, no conjugation).
pub fn pairing(a: &Field, b: &Field) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let (pa, pb) = (a.to_physical(), b.to_physical());
    let sum: Complex64 = pa.values.iter().zip(&pb.values).map(|(x, y)| x * y).sum();
    Ok(sum * a.grid.cell_volume())
}

/// Trigonometric interpolation onto a grid with `n` points per axis and the
/// same period. Modes that do not fit, and the source Nyquist row, are dropped.
/// The result is spectral.
pub fn resample(f: &Field, n: usize) -> Result<Field> {
    let src = f.grid();
    let target = FrequencyGrid::new(src.dim(), n, src.period())?;
    let spec = f.to_spectral();
    let half = (n.min(src.n()) / 2) as i32;
    let scale = (target.len() as f64 / src.len() as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); target.len()];
    for (idx, v) in spec.values.iter().enumerate() {
        let modes = src.modes(idx);
        if modes.iter().any(|m| m.abs() >= half) {
            continue;
        }
        let mut t = 0usize;
        for &m in modes {
            t = t * n + m.rem_euclid(n as i32) as usize;
        }
        out[t] = v * scale;
    }
    Field::from_values(&target, Representation::Spectral, out)
}

/// `h^d Σ_x f(x) e^{i k·x}`, the Fourier coefficient recovered by the pairing.
pub fn fourier_coefficient(f: &Field, k: &[f64]) -> Result<Complex64> {
    let grid = f.grid();
    let idx_minus = grid.lattice_index(&k.iter().map(|c| -c).collect::<Vec<_>>())?;
    let spec = f.to_spectral();
    Ok(spec.values[idx_minus] * (grid.len() as f64).sqrt() * grid.cell_volume())
}
