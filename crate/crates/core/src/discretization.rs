//! Periodic space grid on `[-L, L)`, uniform time grid, fields and paths.
//!
//! Grid points are `x_j = -L + j·dx`. Spectral coefficients are stored in
//! FFT order, so index `k` carries angular frequency `ξ_k = πk/L` for
//! `k < n/2` and `π(k - n)/L` otherwise. The Nyquist index `n/2` carries
//! `-π/dx`, which aliases to `+π/dx`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};
use crate::fft::Fft;

/// Real-valued function sampled on a [`SpaceGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    /// Wraps samples, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite field value at index {i}")));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    /// Samples `f(x_j)` on the grid.
    pub fn from_fn(grid: &SpaceGrid, f: impl Fn(f64) -> f64) -> Self {
        Self { values: (0..grid.n_points()).map(|j| f(grid.x(j))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| c * v).collect() }
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Result<Self> {
        shape_check(self.len(), other.len())?;
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect() })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// Time-indexed family of fields on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn terminal(&self) -> &Field {
        self.fields.last().expect("path has at least one slice")
    }
}

/// Periodic truncation of the real line with its Fourier lattice.
#[derive(Debug, Clone)]
pub struct SpaceGrid {
    half_width: f64,
    n_points: usize,
    dx: f64,
    freqs: Vec<f64>,
    fft: Arc<Fft>,
}

impl PartialEq for SpaceGrid {
    fn eq(&self, other: &Self) -> bool {
        self.half_width == other.half_width && self.n_points == other.n_points
    }
}

impl SpaceGrid {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::Config("half width L must be positive".into()));
        }
        if !n_points.is_power_of_two() {
            return Err(Error::Config("n_points must be a power of two".into()));
        }
        if n_points < 8 {
            return Err(Error::Config("n_points must be at least 8".into()));
        }
        let dx = 2.0 * half_width / n_points as f64;
        let freqs = (0..n_points)
            .map(|k| {
                let m = if k < n_points / 2 { k as f64 } else { k as f64 - n_points as f64 };
                PI * m / half_width
            })
            .collect();
        Ok(Self { half_width, n_points, dx, freqs, fft: Arc::new(Fft::new(n_points)) })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Angular frequencies in FFT order.
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Lattice spacing `π/L`.
    pub fn dxi(&self) -> f64 {
        PI / self.half_width
    }

    /// Nyquist frequency `π/dx`.
    pub fn nyquist(&self) -> f64 {
        PI / self.dx
    }

    pub fn fft(&self) -> &Fft {
        &self.fft
    }

    pub fn check(&self, f: &Field) -> Result<()> {
        shape_check(self.n_points, f.len())
    }

    /// Raw DFT `Σ_j f_j e^{-2πi jk/n}` in FFT order.
    ///
    /// The continuous transform `∫e^{-iξx}f(x)dx` at `ξ_k` equals
    /// `dx·(-1)^k` times this value.
    pub fn forward(&self, f: &Field) -> Result<Vec<Complex64>> {
        self.check(f)?;
        let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        Ok(buf)
    }

    /// Inverse of [`SpaceGrid::forward`], keeping the real part.
    pub fn inverse_real(&self, spec: &[Complex64]) -> Result<Field> {
        shape_check(self.n_points, spec.len())?;
        let mut buf = spec.to_vec();
        self.fft.inverse(&mut buf);
        Ok(Field::from_vec_unchecked(buf.into_iter().map(|z| z.re).collect()))
    }

    /// Applies a real even spectral multiplier `m(ξ_k)` to a field.
    pub fn apply_multiplier(&self, f: &Field, m: &[f64]) -> Result<Field> {
        shape_check(self.n_points, m.len())?;
        let mut spec = self.forward(f)?;
        for (z, w) in spec.iter_mut().zip(m) {
            *z *= *w;
        }
        self.inverse_real(&spec)
    }

    /// Periodic trapezoid rule `dx·Σ f_j`.
    pub fn integrate(&self, f: &Field) -> f64 {
        self.dx * f.values.iter().sum::<f64>()
    }

    /// Cell integrals `∫ |ξ|^a dξ` over the lattice cell of each frequency.
    ///
    /// Cells are `[ξ_k - Δξ/2, ξ_k + Δξ/2]`; the Nyquist cell folds both band
    /// edges together so the weights sum to `∫_{-K}^{K}|ξ|^a dξ`.
    pub fn cell_weights(&self, a: f64) -> Vec<f64> {
        let prim = |xi: f64| libm::copysign(libm::pow(xi.abs(), 1.0 + a) / (1.0 + a), xi);
        let h = 0.5 * self.dxi();
        let nyq = self.nyquist();
        self.freqs
            .iter()
            .enumerate()
            .map(|(k, &xi)| if k == self.n_points / 2 { 2.0 * (prim(nyq) - prim(nyq - h)) } else { prim(xi + h) - prim(xi - h) })
            .collect()
    }

    /// Nearest grid index to `x`, or `None` outside `[-L, L]`.
    pub fn nearest_index(&self, x: f64) -> Option<usize> {
        if !(x.abs() <= self.half_width) {
            return None;
        }
        let j = libm::round((x + self.half_width) / self.dx) as usize;
        Some(j % self.n_points)
    }

    /// Periodic four-point (cubic Lagrange) interpolation at `x`.
    pub fn interpolate(&self, f: &Field, x: f64) -> f64 {
        let n = self.n_points as isize;
        let s = (x + self.half_width) / self.dx;
        let j = libm::floor(s);
        let r = s - j;
        let j = j as isize;
        let at = |i: isize| f.values[i.rem_euclid(n) as usize];
        let (fm, f0, f1, f2) = (at(j - 1), at(j), at(j + 1), at(j + 2));
        let wm = -r * (r - 1.0) * (r - 2.0) / 6.0;
        let w0 = (r + 1.0) * (r - 1.0) * (r - 2.0) / 2.0;
        let w1 = -(r + 1.0) * r * (r - 2.0) / 2.0;
        let w2 = (r + 1.0) * r * (r - 1.0) / 6.0;
        wm * fm + w0 * f0 + w1 * f1 + w2 * f2
    }

    /// Band-limited (trigonometric) evaluation at `x` of the field whose raw
    /// DFT is `spec`.
    pub fn eval_spectral(&self, spec: &[Complex64], x: f64) -> f64 {
        let s = x + self.half_width;
        let mut acc = 0.0;
        for (z, &xi) in spec.iter().zip(&self.freqs) {
            let (sn, cs) = (libm::sin(xi * s), libm::cos(xi * s));
            acc += z.re * cs - z.im * sn;
        }
        acc / self.n_points as f64
    }
}

/// Uniform time grid `t_k = k·dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Config("horizon T must be positive".into()));
        }
        if n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        Ok(Self { horizon, n_steps, dt: horizon / n_steps as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.t(k)).collect()
    }
}

/// Space grid and time grid used together by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    pub space: SpaceGrid,
    pub time: TimeGrid,
}

/// Builds and validates a space-time grid.
pub fn build_grid(half_width: f64, n_points: usize, horizon: f64, n_steps: usize) -> Result<SpaceTimeGrid> {
    Ok(SpaceTimeGrid { space: SpaceGrid::new(half_width, n_points)?, time: TimeGrid::new(horizon, n_steps)? })
}
