//! The stochastic heat equation `∂_t u = ∂²_x u + σ(t, x, u) Ẇ` in mild form,
//! plain and shifted.
//!
//! One step of the scheme is
//! `u_{k+1} = S(dt) u_k + σ(t_k, x, u_k(x)) · (√ε ΔZ_k(x) + m_k(x))`,
//! where `ΔZ_k = ∫_{t_k}^{t_{k+1}} S(t_{k+1}-s) dW(s)` is sampled exactly in
//! law mode by mode and `m_k` is the control drift of [`crate::skeleton`].
//! For a shifted run the sampled standard modes `Z` drive the equation through
//! `Z + μ_k`, and the path carries the log likelihood ratio of the shift.
//!
//! When `σ` is constant the state never leaves Fourier space and observables
//! are evaluated from the spectrum directly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::SigmaSpec;
use crate::discretization::{Field, Path, SpaceGrid, SpaceTimeGrid};
use crate::error::{shape_check, Error, Result};
use crate::noise::{half_spectrum_to_field, NoiseSource};
use crate::rough_space::HParams;
use crate::skeleton::{ControlPath, SkeletonSolver, StepOperators};
use crate::stats::par_map;

/// Paths whose state exceeds this bound abort with [`Error::BlowUp`].
pub const BLOW_UP_BOUND: f64 = 1e6;

/// Terminal functional of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `u(T, x)`.
    PointValue { x: f64 },
    /// `∫ u(T, y) p_width(y - center) dy`.
    WeightedAverage { center: f64, width: f64 },
    /// `sup_x |u(T, x) - 1|` over the grid.
    SupDeviation,
}

/// Precomputed evaluation of an [`Observable`] on half-spectrum coefficients.
#[derive(Debug, Clone)]
pub struct Probe {
    obs: Observable,
    basis: Vec<Complex64>,
}

impl Probe {
    pub fn new(grid: &SpaceGrid, obs: Observable) -> Result<Self> {
        let l = grid.half_width();
        let half = grid.n_points() / 2;
        let freqs = &grid.freqs()[..=half];
        let weight = |k: usize| if k == 0 || k == half { 1.0 } else { 2.0 };
        let basis = match obs {
            Observable::PointValue { x } => {
                if !(x.abs() <= l) {
                    return Err(Error::Domain(format!("probe point {x} outside [-{l}, {l}]")));
                }
                freqs.iter().enumerate().map(|(k, xi)| Complex64::from_polar(weight(k), xi * (x + l))).collect()
            }
            Observable::WeightedAverage { center, width } => {
                if !(width > 0.0) {
                    return Err(Error::Domain(format!("average width must be positive, got {width}")));
                }
                freqs
                    .iter()
                    .enumerate()
                    .map(|(k, xi)| Complex64::from_polar(weight(k) * libm::exp(-width * xi * xi), xi * (center + l)))
                    .collect()
            }
            Observable::SupDeviation => Vec::new(),
        };
        Ok(Self { obs, basis })
    }

    pub fn observable(&self) -> Observable {
        self.obs
    }

    /// Value from half-spectrum coefficients `c_k` (field `= Σ c_k e^{2πijk/n}`).
    /// Returns `None` for observables that need the physical field.
    pub fn eval_half(&self, coef: &[Complex64]) -> Option<f64> {
        if self.basis.is_empty() {
            return None;
        }
        Some(coef.iter().zip(&self.basis).map(|(c, b)| c.re * b.re - c.im * b.im).sum())
    }

    pub fn eval_field(&self, grid: &SpaceGrid, f: &Field) -> Result<f64> {
        if let Observable::SupDeviation = self.obs {
            grid.check(f)?;
            return Ok(f.values().iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs())));
        }
        let coef = half_coefficients(grid, f)?;
        Ok(self.eval_half(&coef).expect("spectral observable"))
    }
}

fn half_coefficients(grid: &SpaceGrid, f: &Field) -> Result<Vec<Complex64>> {
    let n = grid.n_points();
    let spec = grid.forward(f)?;
    Ok(spec[..=n / 2].iter().map(|z| z / n as f64).collect())
}

/// `u(x)` of a grid field: the grid value at grid points, band-limited
/// interpolation elsewhere.
pub fn point_value(grid: &SpaceGrid, f: &Field, x: f64) -> Result<f64> {
    grid.check(f)?;
    if let Some(j) = grid.nearest_index(x) {
        if (grid.x(j) - x).abs() <= 1e-9 * grid.dx() || (grid.x(j) + 2.0 * grid.half_width() - x).abs() <= 1e-9 * grid.dx() {
            return Ok(f.values()[j]);
        }
    }
    Probe::new(grid, Observable::PointValue { x })?.eval_field(grid, f)
}

/// What to keep from each simulated path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchRequest {
    pub observables: Vec<Observable>,
    pub keep_terminal: bool,
    pub keep_paths: bool,
}

impl BatchRequest {
    pub fn observables(obs: &[Observable]) -> Self {
        Self { observables: obs.to_vec(), ..Self::default() }
    }
}

/// Output of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRun {
    pub lane: u64,
    pub observables: Vec<f64>,
    /// `log dP/dQ` of the shift (0 for unshifted runs).
    pub log_weight: f64,
    pub terminal: Option<Field>,
    pub path: Option<Path>,
}

/// A batch of trajectories sharing grid, `ε`, `σ` and control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub eps: f64,
    pub seed: u64,
    /// Noise lane of each path; together with `seed` it fixes the path.
    pub lanes: Vec<u64>,
    pub control: Option<ControlPath>,
    pub runs: Vec<PathRun>,
}

impl TrajectoryBatch {
    /// Values of observable `i` across the batch.
    pub fn observable(&self, i: usize) -> Vec<f64> {
        self.runs.iter().map(|r| r.observables[i]).collect()
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.log_weight).collect()
    }
}

#[derive(Debug, Clone)]
struct Shift {
    control: ControlPath,
    /// Drift coefficients `dx·v_k·φ̂_k` (half spectrum), per step.
    drift: Vec<Vec<Complex64>>,
    drift_fields: Vec<Field>,
    /// `μ` in standard-normal units, per step (empty when `ε = 0`).
    mu: Vec<Vec<Complex64>>,
}

/// Time stepper for one configuration.
#[derive(Debug, Clone)]
pub struct SheSolver {
    grid: SpaceTimeGrid,
    sigma: SigmaSpec,
    eps: f64,
    ops: StepOperators,
    /// `√(ε v_k)` on the half spectrum.
    noise_std: Vec<f64>,
    shift: Option<Shift>,
}

impl SheSolver {
    pub fn new(grid: &SpaceTimeGrid, params: &HParams, sigma: &SigmaSpec, eps: f64, control: Option<&ControlPath>) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Domain(format!("noise scale ε must be non-negative, got {eps}")));
        }
        let ops = StepOperators::new(grid, params);
        let half = grid.space.n_points() / 2;
        let noise_std: Vec<f64> = ops.mode_variance[..=half].iter().map(|v| libm::sqrt(eps * v)).collect();
        let shift = match control {
            None => None,
            Some(g) => {
                shape_check(grid.time.n_steps(), g.n_steps())?;
                let dx = grid.space.dx();
                let n = grid.space.n_points();
                let mut drift = Vec::with_capacity(g.n_steps());
                let mut drift_fields = Vec::with_capacity(g.n_steps());
                let mut mu = Vec::new();
                for p in g.profiles() {
                    let spec = grid.space.forward(p)?;
                    let d: Vec<Complex64> = spec[..=half].iter().zip(&ops.mode_variance).map(|(z, v)| z * (dx * v)).collect();
                    drift_fields.push(half_spectrum_to_field(&grid.space, &d));
                    if eps > 0.0 {
                        mu.push(spec[..=half].iter().zip(&ops.mode_variance).map(|(z, v)| z * (dx * libm::sqrt(v / eps))).collect());
                    }
                    drift.push(d);
                    debug_assert_eq!(n, p.len());
                }
                Some(Shift { control: g.clone(), drift, drift_fields, mu })
            }
        };
        Ok(Self { grid: grid.clone(), sigma: sigma.clone(), eps, ops, noise_std, shift })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn control(&self) -> Option<&ControlPath> {
        self.shift.as_ref().map(|s| &s.control)
    }

    /// Forcing coefficients `√ε ΔZ_k + m_k` (half spectrum) for standard modes `z`.
    fn forcing(&self, k: usize, z: &[Complex64]) -> Vec<Complex64> {
        let mut coef: Vec<Complex64> = z.iter().zip(&self.noise_std).map(|(z, s)| z * *s).collect();
        if let Some(sh) = &self.shift {
            for (c, d) in coef.iter_mut().zip(&sh.drift[k]) {
                *c += d;
            }
        }
        coef
    }

    /// `log dP/dQ` contribution of step `k` for standard modes `z`.
    fn log_weight_step(&self, k: usize, z: &[Complex64]) -> f64 {
        let Some(sh) = &self.shift else { return 0.0 };
        if sh.mu.is_empty() {
            return 0.0;
        }
        let last = z.len() - 1;
        sh.mu[k]
            .iter()
            .zip(z)
            .enumerate()
            .map(
                |(i, (m, z))| {
                    if i == 0 || i == last {
                        -m.re * z.re - 0.5 * m.re * m.re
                    } else {
                        -2.0 * (m.re * z.re + m.im * z.im) - m.norm_sqr()
                    }
                },
            )
            .sum()
    }

    /// One step from `u_k` with the standard modes of `source` at step `k`.
    pub fn step(&self, u: &Field, k: usize, source: &NoiseSource) -> Result<Field> {
        let mut z = vec![Complex64::new(0.0, 0.0); self.noise_std.len()];
        source.standard_modes(k, &mut z);
        self.step_with_modes(u, k, &z)
    }

    /// One step from `u_k` with given standard modes `z` (half spectrum).
    pub fn step_with_modes(&self, u: &Field, k: usize, z: &[Complex64]) -> Result<Field> {
        let space = &self.grid.space;
        space.check(u)?;
        shape_check(self.noise_std.len(), z.len())?;
        if k >= self.grid.time.n_steps() {
            return Err(Error::Domain(format!("step {k} beyond the time grid")));
        }
        if !u.is_finite() {
            return Err(Error::Domain(format!("state not finite before step {k}")));
        }
        let forcing = if self.eps == 0.0 {
            match &self.shift {
                Some(sh) => sh.drift_fields[k].clone(),
                None => Field::zeros(u.len()),
            }
        } else {
            half_spectrum_to_field(space, &self.forcing(k, z))
        };
        let mut next = space.apply_multiplier(u, &self.ops.heat)?;
        let t = self.grid.time.t(k);
        for (j, (o, (f, uj))) in next.values_mut().iter_mut().zip(forcing.values().iter().zip(u.values())).enumerate() {
            *o += self.sigma.eval(t, space.x(j), *uj) * f;
        }
        Ok(next)
    }

    /// Simulates the path of noise lane `lane`.
    pub fn run(&self, seed: u64, lane: u64, request: &BatchRequest, probes: &[Probe]) -> Result<PathRun> {
        if let Some(c) = self.sigma.as_constant() {
            self.run_spectral(c, seed, lane, request, probes)
        } else {
            self.run_physical(seed, lane, request, probes)
        }
    }

    fn blow_up(&self, lane: u64, step: usize, sup: f64) -> Error {
        Error::BlowUp { path: lane as usize, step, sup }
    }

    fn run_physical(&self, seed: u64, lane: u64, request: &BatchRequest, probes: &[Probe]) -> Result<PathRun> {
        let space = &self.grid.space;
        let n_steps = self.grid.time.n_steps();
        let source = NoiseSource::new(seed, lane);
        let mut z = vec![Complex64::new(0.0, 0.0); self.noise_std.len()];
        let mut u = Field::constant(space.n_points(), 1.0);
        let mut fields = Vec::new();
        if request.keep_paths {
            fields.push(u.clone());
        }
        let mut log_weight = 0.0;
        for k in 0..n_steps {
            source.standard_modes(k, &mut z);
            log_weight += self.log_weight_step(k, &z);
            u = self.step_with_modes(&u, k, &z)?;
            let sup = u.max_abs();
            if !(sup <= BLOW_UP_BOUND) {
                return Err(self.blow_up(lane, k + 1, sup));
            }
            if request.keep_paths {
                fields.push(u.clone());
            }
        }
        let observables = probes.iter().map(|p| p.eval_field(space, &u)).collect::<Result<Vec<_>>>()?;
        Ok(PathRun {
            lane,
            observables,
            log_weight,
            terminal: request.keep_terminal.then(|| u.clone()),
            path: request.keep_paths.then(|| Path { times: self.grid.time.times(), fields }),
        })
    }

    fn run_spectral(&self, c: f64, seed: u64, lane: u64, request: &BatchRequest, probes: &[Probe]) -> Result<PathRun> {
        let space = &self.grid.space;
        let half = self.noise_std.len();
        let n_steps = self.grid.time.n_steps();
        let source = NoiseSource::new(seed, lane);
        let mut z = vec![Complex64::new(0.0, 0.0); half];
        let mut state = vec![Complex64::new(0.0, 0.0); half];
        state[0] = Complex64::new(1.0, 0.0);
        let mut fields = Vec::new();
        if request.keep_paths {
            fields.push(Field::constant(space.n_points(), 1.0));
        }
        let mut log_weight = 0.0;
        for k in 0..n_steps {
            if self.eps > 0.0 {
                source.standard_modes(k, &mut z);
                log_weight += self.log_weight_step(k, &z);
            }
            let forcing = self.forcing(k, &z);
            for ((s, f), h) in state.iter_mut().zip(&forcing).zip(&self.ops.heat) {
                *s = *s * *h + f * c;
            }
            // Σ|c_k| weights bound sup|u|; only materialize when it is large.
            let bound: f64 = state.iter().map(|s| 2.0 * s.norm()).sum();
            if !(bound <= BLOW_UP_BOUND) {
                let f = half_spectrum_to_field(space, &state);
                let sup = f.max_abs();
                if !(sup <= BLOW_UP_BOUND) {
                    return Err(self.blow_up(lane, k + 1, sup));
                }
            }
            if request.keep_paths {
                fields.push(half_spectrum_to_field(space, &state));
            }
        }
        let needs_field = request.keep_terminal || probes.iter().any(|p| p.eval_half(&state).is_none());
        let terminal = needs_field.then(|| half_spectrum_to_field(space, &state));
        let observables = probes
            .iter()
            .map(|p| match p.eval_half(&state) {
                Some(v) => Ok(v),
                None => p.eval_field(space, terminal.as_ref().expect("terminal field")),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PathRun {
            lane,
            observables,
            log_weight,
            terminal: if request.keep_terminal { terminal } else { None },
            path: request.keep_paths.then(|| Path { times: self.grid.time.times(), fields }),
        })
    }

    /// Simulates lanes `0..n_paths` of `seed`, in parallel when enabled.
    pub fn batch(&self, n_paths: usize, seed: u64, request: &BatchRequest) -> Result<TrajectoryBatch> {
        if n_paths == 0 {
            return Err(Error::Domain("n_paths must be at least 1".into()));
        }
        let probes = request.observables.iter().map(|o| Probe::new(&self.grid.space, *o)).collect::<Result<Vec<_>>>()?;
        let runs = par_map(n_paths, |i| self.run(seed, i as u64, request, &probes));
        let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryBatch { eps: self.eps, seed, lanes: (0..n_paths as u64).collect(), control: self.control().cloned(), runs })
    }
}

/// Independent trajectories of the unshifted equation.
pub fn solve_stochastic(
    grid: &SpaceTimeGrid,
    params: &HParams,
    eps: f64,
    sigma: &SigmaSpec,
    n_paths: usize,
    seed: u64,
    request: &BatchRequest,
) -> Result<TrajectoryBatch> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("noise scale ε must be positive, got {eps}")));
    }
    SheSolver::new(grid, params, sigma, eps, None)?.batch(n_paths, seed, request)
}

/// Independent trajectories of the equation driven by `W + ε^{-1/2}∫g`.
#[allow(clippy::too_many_arguments)]
pub fn solve_controlled(
    grid: &SpaceTimeGrid,
    params: &HParams,
    eps: f64,
    g: &ControlPath,
    sigma: &SigmaSpec,
    n_paths: usize,
    seed: u64,
    request: &BatchRequest,
) -> Result<TrajectoryBatch> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("noise scale ε must be positive, got {eps}")));
    }
    SheSolver::new(grid, params, sigma, eps, Some(g))?.batch(n_paths, seed, request)
}

/// The zero-noise limit of the shifted equation: the skeleton at
/// mollification 0 solved on the same grid.
pub fn skeleton_reference(grid: &SpaceTimeGrid, params: &HParams, g: &ControlPath, sigma: &SigmaSpec) -> Result<Path> {
    let sol = SkeletonSolver::new(grid, params).picard(g, 0.0, sigma, 1e-12, 200)?;
    Ok(sol.u)
}
