//! Seeded synthesis of the noise: white in time, spatially rough with
//! spectral density `c1|ξ|^{1-2H}`.
//!
//! A step increment is generated mode by mode. With `Z_k` standard complex
//! Gaussians (real for `k = 0` and the Nyquist index) and Hermitian symmetry,
//! the grid field has raw DFT `n·√(c1 W_k τ_k) Z_k`, where `W_k` is the cell
//! integral of `|ξ|^{1-2H}` and `τ_k` a per-mode time factor: `dt` for the
//! raw increment `ΔW`, `(1 - e^{-2dtξ²})/2ξ²` for the heat-convolved increment
//! `ΔZ = ∫_step S(t_{k+1}-s) dW(s)`.
//!
//! Random numbers come from ChaCha8 keyed by `(seed, channel)`, with the
//! stream selected by the lane (path or sample id) and the word position by
//! the step index, so any `(seed, lane, step)` can be regenerated
//! independently of scheduling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::discretization::{Field, SpaceGrid};
use crate::error::{Error, Result};
use crate::rough_space::HParams;

/// Independent random channels derived from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    Noise = 1,
    Optimizer = 2,
    Probe = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 generator for `(seed, channel, lane, block)`.
pub fn keyed_rng(seed: u64, channel: Channel, lane: u64, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = splitmix(seed ^ (channel as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(lane);
    rng.set_word_pos((block as u128) << 40);
    rng
}

/// Noise stream of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub seed: u64,
    pub lane: u64,
}

impl NoiseSource {
    pub fn new(seed: u64, lane: u64) -> Self {
        Self { seed, lane }
    }

    /// Standard complex Gaussians for the half spectrum `k = 0..=n/2` of step
    /// `step`. Entries 0 and `n/2` are real with unit variance; the others have
    /// independent real and imaginary parts of variance 1/2.
    pub fn standard_modes(&self, step: usize, out: &mut [Complex64]) {
        let mut rng = keyed_rng(self.seed, Channel::Noise, self.lane, step as u64);
        let last = out.len() - 1;
        let r = core::f64::consts::FRAC_1_SQRT_2;
        for (k, z) in out.iter_mut().enumerate() {
            if k == 0 || k == last {
                *z = Complex64::new(rng.sample(StandardNormal), 0.0);
            } else {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                *z = Complex64::new(r * a, r * b);
            }
        }
    }

    /// Raw 64-bit draws on the probe channel, for auxiliary randomness.
    pub fn probe_u64(&self, block: u64) -> u64 {
        keyed_rng(self.seed, Channel::Probe, self.lane, block).next_u64()
    }
}

/// Per-mode time factor `(1 - e^{-2 dt ξ²}) / 2ξ²` (equal to `dt` at `ξ = 0`).
pub fn convolution_factor(dt: f64, xi: f64) -> f64 {
    let q = 2.0 * dt * xi * xi;
    if q < 1e-8 {
        dt * (1.0 - 0.5 * q)
    } else {
        -libm::expm1(-q) / (2.0 * xi * xi)
    }
}

/// Half-spectrum standard deviations `√(c1 W_k τ_k)` for `k = 0..=n/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeScales {
    pub std: Vec<f64>,
}

impl ModeScales {
    /// Raw increment `ΔW` over a step of length `dt`.
    pub fn increment(grid: &SpaceGrid, params: &HParams, dt: f64) -> Self {
        let w = grid.cell_weights(params.alpha());
        let half = grid.n_points() / 2;
        Self { std: (0..=half).map(|k| libm::sqrt(params.c1 * w[k] * dt)).collect() }
    }

    /// Heat-convolved increment `ΔZ` over a step of length `dt`.
    pub fn convolved(grid: &SpaceGrid, params: &HParams, dt: f64) -> Self {
        let w = grid.cell_weights(params.alpha());
        let xi = grid.freqs();
        let half = grid.n_points() / 2;
        Self { std: (0..=half).map(|k| libm::sqrt(params.c1 * w[k] * convolution_factor(dt, xi[k]))).collect() }
    }

    /// Per-mode variances `c1 W_k τ_k`.
    pub fn variances(&self) -> Vec<f64> {
        self.std.iter().map(|s| s * s).collect()
    }
}

/// Expands half-spectrum coefficients `c_k` (k = 0..=n/2) scaled by `n` into a
/// real field through a Hermitian inverse transform.
pub fn half_spectrum_to_field(grid: &SpaceGrid, half: &[Complex64]) -> Field {
    let n = grid.n_points();
    let mut full = vec![Complex64::new(0.0, 0.0); n];
    full[..=n / 2].copy_from_slice(half);
    for k in 1..n / 2 {
        full[n - k] = half[k].conj();
    }
    grid.fft().inverse_unnormalized(&mut full);
    Field::from_vec_unchecked(full.into_iter().map(|z| z.re).collect())
}

fn sample_with(grid: &SpaceGrid, scales: &ModeScales, src: &NoiseSource, step: usize) -> Field {
    let mut half = vec![Complex64::new(0.0, 0.0); grid.n_points() / 2 + 1];
    src.standard_modes(step, &mut half);
    for (z, s) in half.iter_mut().zip(&scales.std) {
        *z *= *s;
    }
    half_spectrum_to_field(grid, &half)
}

/// Raw noise increment `ΔW_k` on the grid (as a density: `⟨ΔW, φ⟩ ≈ dx Σ ΔW_j φ_j`).
pub fn sample_increment(step: usize, dt: f64, grid: &SpaceGrid, params: &HParams, src: &NoiseSource) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("increment needs dt > 0, got {dt}")));
    }
    Ok(sample_with(grid, &ModeScales::increment(grid, params, dt), src, step))
}

/// Heat-convolved increment `ΔZ_k = ∫_{t_k}^{t_{k+1}} S(t_{k+1}-s) dW(s)` at the
/// grid points.
pub fn sample_convolved_increment(step: usize, dt: f64, grid: &SpaceGrid, params: &HParams, src: &NoiseSource) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("increment needs dt > 0, got {dt}")));
    }
    Ok(sample_with(grid, &ModeScales::convolved(grid, params, dt), src, step))
}

/// Materialized raw increments of one seed lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub source: NoiseSource,
    pub dt: f64,
    pub increments: Vec<Field>,
}

impl NoiseRealization {
    pub fn generate(grid: &SpaceGrid, params: &HParams, dt: f64, n_steps: usize, source: NoiseSource) -> Result<Self> {
        let increments = (0..n_steps).map(|k| sample_increment(k, dt, grid, params, &source)).collect::<Result<Vec<_>>>()?;
        Ok(Self { source, dt, increments })
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Setup shared by the covariance experiments.
#[derive(Debug, Clone)]
pub struct CovarianceSetup<'a> {
    pub grid: &'a SpaceGrid,
    pub params: &'a HParams,
    pub n_steps: usize,
    pub seed: u64,
}

/// Antiderivative basis `∫_0^x e^{iξ_k(z+L)} dz` for `k = 0..=n/2`.
fn antiderivative_basis(grid: &SpaceGrid, x: f64) -> Vec<Complex64> {
    let l = grid.half_width();
    let half = grid.n_points() / 2;
    (0..=half)
        .map(|k| {
            let xi = grid.freqs()[k];
            if k == 0 {
                Complex64::new(x, 0.0)
            } else {
                let phase = Complex64::new(libm::cos(xi * l), libm::sin(xi * l));
                let e = Complex64::new(libm::cos(xi * x) - 1.0, libm::sin(xi * x));
                phase * e / Complex64::new(0.0, xi)
            }
        })
        .collect()
}

/// Samples `W(t, x_i)` at probe points, `W(t,·)` anchored at `W(t,0) = 0`,
/// accumulating `n_steps` raw increments over `[0, t]`.
pub fn sample_sheet(setup: &CovarianceSetup<'_>, t: f64, probes: &[f64], sample: u64) -> Result<Vec<f64>> {
    let bases = probe_bases(setup, t, probes)?;
    let scales = ModeScales::increment(setup.grid, setup.params, t / setup.n_steps as f64);
    Ok(sample_with_bases(setup, &scales, &bases, sample))
}

fn probe_bases(setup: &CovarianceSetup<'_>, t: f64, probes: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    let l = setup.grid.half_width();
    if let Some(x) = probes.iter().find(|x| !(x.abs() <= l)) {
        return Err(Error::Domain(format!("probe {x} outside the grid [-{l}, {l}]")));
    }
    if !(t > 0.0) || setup.n_steps == 0 {
        return Err(Error::Domain("need t > 0 and at least one step".into()));
    }
    Ok(probes.iter().map(|&x| antiderivative_basis(setup.grid, x)).collect())
}

fn sample_with_bases(setup: &CovarianceSetup<'_>, scales: &ModeScales, bases: &[Vec<Complex64>], sample: u64) -> Vec<f64> {
    let n = setup.grid.n_points();
    let src = NoiseSource::new(setup.seed, sample);
    let mut total = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
    let mut buf = total.clone();
    for k in 0..setup.n_steps {
        src.standard_modes(k, &mut buf);
        for ((acc, z), s) in total.iter_mut().zip(&buf).zip(&scales.std) {
            *acc += z * *s;
        }
    }
    bases
        .iter()
        .map(|b| {
            let mut v = (total[0] * b[0]).re + (total[n / 2] * b[n / 2]).re;
            for k in 1..n / 2 {
                v += 2.0 * (total[k] * b[k]).re;
            }
            v
        })
        .collect()
}

/// Empirical `Cov(W(t,x), W(t,y))` for several probe pairs from shared samples.
pub fn empirical_covariances(n_samples: usize, t: f64, pairs: &[(f64, f64)], setup: &CovarianceSetup<'_>) -> Result<Vec<Estimate>> {
    if n_samples < 100 {
        return Err(Error::Domain("empirical covariance needs at least 100 samples".into()));
    }
    let mut probes: Vec<f64> = Vec::new();
    for &(x, y) in pairs {
        probes.push(x);
        probes.push(y);
    }
    let bases = probe_bases(setup, t, &probes)?;
    let scales = ModeScales::increment(setup.grid, setup.params, t / setup.n_steps as f64);
    let draws = crate::stats::par_map(n_samples, |i| sample_with_bases(setup, &scales, &bases, i as u64));
    let mut prods: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); pairs.len()];
    for d in draws {
        for (p, v) in prods.iter_mut().enumerate() {
            v.push(d[2 * p] * d[2 * p + 1]);
        }
    }
    Ok(prods
        .iter()
        .map(|v| {
            let (m, se) = crate::stats::mean_stderr(v);
            Estimate { value: m, stderr: se }
        })
        .collect())
}

/// Empirical `Cov(W(t,x), W(t,y))`.
pub fn empirical_covariance(n_samples: usize, t: f64, x: f64, y: f64, setup: &CovarianceSetup<'_>) -> Result<Estimate> {
    Ok(empirical_covariances(n_samples, t, &[(x, y)], setup)?[0])
}

/// `½(|x|^{2H} + |y|^{2H} - |x-y|^{2H})·t`.
pub fn sheet_covariance(t: f64, x: f64, y: f64, hurst: f64) -> f64 {
    let p = |v: f64| libm::pow(v.abs(), 2.0 * hurst);
    0.5 * t * (p(x) + p(y) - p(x - y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_streams_differ_and_repeat() {
        let a = keyed_rng(7, Channel::Noise, 0, 0).next_u64();
        let b = keyed_rng(7, Channel::Noise, 1, 0).next_u64();
        let c = keyed_rng(7, Channel::Noise, 0, 1).next_u64();
        let d = keyed_rng(7, Channel::Optimizer, 0, 0).next_u64();
        assert_eq!(a, keyed_rng(7, Channel::Noise, 0, 0).next_u64());
        assert!(a != b && a != c && a != d);
    }

    #[test]
    fn convolution_factor_limits() {
        assert_eq!(convolution_factor(0.1, 0.0), 0.1);
        let v = convolution_factor(0.1, 3.0);
        assert!((v - (1.0 - (-1.8f64).exp()) / 18.0).abs() < 1e-15);
        assert!((convolution_factor(0.1, 1e-5) - 0.1).abs() < 1e-10);
    }

    #[test]
    fn increments_are_deterministic() {
        let g = SpaceGrid::new(8.0, 64).unwrap();
        let p = HParams::new(0.3).unwrap();
        let s = NoiseSource::new(42, 3);
        let a = sample_increment(5, 0.01, &g, &p, &s).unwrap();
        let b = sample_increment(5, 0.01, &g, &p, &s).unwrap();
        assert_eq!(a, b);
        let c = sample_increment(6, 0.01, &g, &p, &s).unwrap();
        assert_ne!(a, c);
        assert!(sample_increment(0, 0.0, &g, &p, &s).is_err());
    }

    #[test]
    fn sheet_covariance_values() {
        assert!((sheet_covariance(1.0, 1.0, -1.0, 0.3) - 0.5 * (2.0 - 2f64.powf(0.6))).abs() < 1e-15);
        assert_eq!(sheet_covariance(1.0, 0.0, 0.0, 0.3), 0.0);
    }
}
