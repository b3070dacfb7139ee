//! Action minimization for terminal-value targets.
//!
//! Controls are searched in a reduced basis: time blocks × spatial translates
//! of the heat-profiled representer `φ_k = p_{T - t_{k+1} + w}(c - ·)`, where
//! `c` is a translate centre and `w` the width of the observable (0 for point
//! values). The action is the exact Gram form on the basis; the observable is
//! a skeleton solve at mollification 0. Constraints are enforced with a
//! quadratic penalty whose multiplier doubles until the violation is small,
//! followed by a scaling polish onto the feasible side.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coefficients::SigmaSpec;
use crate::discretization::{Field, SpaceTimeGrid};
use crate::error::{Error, Result};
use crate::noise::{keyed_rng, Channel};
use crate::optim::cholesky_solve;
use crate::rough_space::HParams;
use crate::she::{Observable, Probe};
use crate::skeleton::{action, ControlPath, SkeletonSolver};

/// Direction of the terminal constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    AtLeast,
    AtMost,
}

/// `observable(u(T)) ≥ level` (or `≤`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateProblem {
    pub observable: Observable,
    pub level: f64,
    pub sense: Sense,
}

impl RateProblem {
    pub fn at_least(observable: Observable, level: f64) -> Self {
        Self { observable, level, sense: Sense::AtLeast }
    }

    pub fn at_most(observable: Observable, level: f64) -> Self {
        Self { observable, level, sense: Sense::AtMost }
    }

    /// Signed violation: positive when the constraint fails.
    pub fn violation(&self, value: f64) -> f64 {
        match self.sense {
            Sense::AtLeast => self.level - value,
            Sense::AtMost => value - self.level,
        }
    }

    pub fn is_met(&self, value: f64) -> bool {
        self.violation(value) <= 0.0
    }

    fn centre_and_width(&self) -> Result<(f64, f64)> {
        match self.observable {
            Observable::PointValue { x } => Ok((x, 0.0)),
            Observable::WeightedAverage { center, width } => Ok((center, width)),
            Observable::SupDeviation => Err(Error::Config("rate problems need a point value or weighted average".into())),
        }
    }
}

/// Layout of the reduced control basis. Independent of the grid, so
/// coefficients found on one grid define a control on any other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub n_blocks: usize,
    /// Translate centres.
    pub centres: Vec<f64>,
    /// Extra heat time added to every profile.
    pub width: f64,
}

impl BasisSpec {
    /// Default basis for a problem: 4 time blocks × translates at
    /// `c` and `c ± √T/2`.
    pub fn for_problem(problem: &RateProblem, horizon: f64) -> Result<Self> {
        let (c, w) = problem.centre_and_width()?;
        let d = 0.5 * libm::sqrt(horizon);
        Ok(Self { n_blocks: 4, centres: vec![c, c - d, c + d], width: w })
    }

    pub fn len(&self) -> usize {
        self.n_blocks * self.centres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn blocks(&self, n_steps: usize) -> Vec<(usize, usize)> {
        let nb = self.n_blocks.min(n_steps).max(1);
        (0..nb).map(|b| (b * n_steps / nb, (b + 1) * n_steps / nb)).collect()
    }

    /// Effective number of basis functions on a grid with `n_steps` steps.
    pub fn len_on(&self, n_steps: usize) -> usize {
        self.blocks(n_steps).len() * self.centres.len()
    }

    /// Profile of translate `c` at step `k`, built from its spectrum
    /// `(1/dx)·e^{-τξ²}·e^{-iξ(c+L)}`, `τ = T - t_{k+1} + width`.
    fn profile(&self, grid: &SpaceTimeGrid, k: usize, c: f64) -> Result<Field> {
        let space = &grid.space;
        let tau = grid.time.horizon() - grid.time.t(k + 1) + self.width;
        let l = space.half_width();
        let inv_dx = 1.0 / space.dx();
        let spec: Vec<Complex64> =
            space.freqs().iter().map(|xi| Complex64::from_polar(inv_dx * libm::exp(-tau * xi * xi), -xi * (c + l))).collect();
        space.inverse_real(&spec)
    }

    /// The basis functions as controls, ordered block-major.
    pub fn functions(&self, grid: &SpaceTimeGrid, params: &HParams) -> Result<Vec<ControlPath>> {
        let n = grid.space.n_points();
        let n_steps = grid.time.n_steps();
        let mut out = Vec::new();
        for (lo, hi) in self.blocks(n_steps) {
            for &c in &self.centres {
                let mut profiles = vec![Field::zeros(n); n_steps];
                for (k, p) in profiles.iter_mut().enumerate().take(hi).skip(lo) {
                    *p = self.profile(grid, k, c)?;
                }
                out.push(ControlPath::new(grid, params, profiles)?);
            }
        }
        Ok(out)
    }

    /// `Σ_i c_i B_i` on `grid`.
    pub fn control(&self, grid: &SpaceTimeGrid, params: &HParams, coefficients: &[f64]) -> Result<ControlPath> {
        let n = grid.space.n_points();
        let n_steps = grid.time.n_steps();
        let blocks = self.blocks(n_steps);
        if coefficients.len() != blocks.len() * self.centres.len() {
            return Err(Error::Shape { expected: blocks.len() * self.centres.len(), got: coefficients.len() });
        }
        let mut profiles = vec![Field::zeros(n); n_steps];
        let mut i = 0;
        for (lo, hi) in blocks {
            for &c in &self.centres {
                let ci = coefficients[i];
                i += 1;
                if ci == 0.0 {
                    continue;
                }
                for (k, p) in profiles.iter_mut().enumerate().take(hi).skip(lo) {
                    *p = p.axpy(ci, &self.profile(grid, k, c)?)?;
                }
            }
        }
        ControlPath::new(grid, params, profiles)
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateOptions {
    /// Basis override; the default basis of the problem when `None`.
    pub basis: Option<BasisSpec>,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Stop doubling the penalty once the violation is below
    /// `violation_tol · |level - observable(0)|`.
    pub violation_tol: f64,
    pub max_penalty_rounds: usize,
    /// Iteration cap of each penalty round.
    pub max_iter: usize,
    pub random_starts: usize,
    pub seed: u64,
    /// Membership bound `N` of `S^N`; results above it are flagged.
    pub budget: Option<f64>,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            basis: None,
            picard_tol: 1e-13,
            picard_max_iter: 200,
            violation_tol: 1e-4,
            max_penalty_rounds: 40,
            max_iter: 200,
            random_starts: 2,
            seed: 0,
            budget: None,
        }
    }
}

/// Outcome of one optimizer start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub label: String,
    pub rate: f64,
    pub feasible: bool,
    pub stalled: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub rate: f64,
    pub optimal_g: ControlPath,
    pub basis: BasisSpec,
    pub coefficients: Vec<f64>,
    pub achieved_observable: f64,
    /// `max(0, violation)` at the returned control.
    pub feasibility_residual: f64,
    pub feasible: bool,
    pub optimizer_iterations: usize,
    /// `‖Gc - λ∇obs‖ / ‖Gc‖` with the least-squares multiplier `λ`.
    pub stationarity: f64,
    /// `false` when the best start stalled.
    pub certified: bool,
    /// `(max - min) / min` of the feasible start rates.
    pub dispersion: f64,
    pub starts: Vec<StartReport>,
    pub flags: Vec<String>,
}

/// `½∫‖g‖²_H` of a control (alias of [`crate::skeleton::action`]).
pub fn evaluate_rate(grid: &SpaceTimeGrid, params: &HParams, g: &ControlPath) -> Result<f64> {
    action(grid, g, params)
}

struct Problem<'a> {
    solver: SkeletonSolver,
    sigma: &'a SigmaSpec,
    problem: RateProblem,
    probe: Probe,
    /// Drift fields of basis function `i` at step `k`.
    drifts: Vec<Vec<Field>>,
    gram: Vec<f64>,
    /// Coefficient `c_i = y_i · scale_i` normalizes the Gram diagonal.
    scale: Vec<f64>,
    tol: f64,
    max_iter: usize,
}

impl Problem<'_> {
    fn nb(&self) -> usize {
        self.scale.len()
    }

    fn coeffs(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.scale).map(|(a, s)| a * s).collect()
    }

    fn observable(&self, y: &[f64]) -> Result<f64> {
        let c = self.coeffs(y);
        let grid = self.solver.grid();
        let n = grid.space.n_points();
        let mut drifts = vec![Field::zeros(n); grid.time.n_steps()];
        for (i, ci) in c.iter().enumerate() {
            if *ci == 0.0 {
                continue;
            }
            for (d, b) in drifts.iter_mut().zip(&self.drifts[i]) {
                for (x, v) in d.values_mut().iter_mut().zip(b.values()) {
                    *x += ci * v;
                }
            }
        }
        let sol = self.solver.picard_with_drifts(&drifts, 0.0, self.sigma, self.tol, self.max_iter)?;
        self.probe.eval_field(&grid.space, sol.u.terminal())
    }

    /// `½ yᵀ G̃ y` in normalized coordinates.
    fn action(&self, y: &[f64]) -> f64 {
        0.5 * y.iter().zip(self.gram_times(y)).map(|(a, b)| a * b).sum::<f64>()
    }

    fn gram_times(&self, y: &[f64]) -> Vec<f64> {
        let nb = self.nb();
        (0..nb).map(|i| (0..nb).map(|j| self.gram[i * nb + j] * y[j]).sum()).collect()
    }

    /// Observable and its forward-difference gradient.
    fn observable_grad(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f0 = self.observable(y)?;
        let ymax = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut g = vec![0.0; y.len()];
        let mut yp = y.to_vec();
        for i in 0..y.len() {
            let h = 1e-6 * ymax;
            yp[i] = y[i] + h;
            g[i] = (self.observable(&yp)? - f0) / h;
            yp[i] = y[i];
        }
        Ok((f0, g))
    }
}

struct Outcome {
    y: Vec<f64>,
    rate: f64,
    obs: f64,
    violation: f64,
    stalled: bool,
    iterations: usize,
}

/// Gauss–Newton minimization of `½yᵀG̃y + ridge|y|² + μ·max(0, r(y))²` from `y`.
/// Returns the minimizer, the iteration count and whether it stalled.
fn penalty_round(p: &Problem<'_>, y0: Vec<f64>, mu: f64, ridge: f64, grad_tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize, bool)> {
    let nb = p.nb();
    let sign = match p.problem.sense {
        Sense::AtLeast => -1.0,
        Sense::AtMost => 1.0,
    };
    let value = |y: &[f64], r: f64| p.action(y) + ridge * y.iter().map(|v| v * v).sum::<f64>() + mu * r.max(0.0).powi(2);
    let mut y = y0;
    let mut since_decrease = 0;
    let (mut o, mut og) = p.observable_grad(&y)?;
    let mut f = value(&y, p.problem.violation(o));
    for it in 1..=max_iter {
        let r = p.problem.violation(o).max(0.0);
        let dr: Vec<f64> = og.iter().map(|d| sign * d).collect();
        let gy = p.gram_times(&y);
        let grad: Vec<f64> = (0..nb).map(|i| gy[i] + 2.0 * ridge * y[i] + 2.0 * mu * r * dr[i]).collect();
        let gn = libm::sqrt(grad.iter().map(|v| v * v).sum::<f64>());
        if gn <= grad_tol {
            return Ok((y, it - 1, false));
        }
        let mut h = p.gram.clone();
        for i in 0..nb {
            h[i * nb + i] += 2.0 * ridge;
            if r > 0.0 {
                for j in 0..nb {
                    h[i * nb + j] += 2.0 * mu * dr[i] * dr[j];
                }
            }
        }
        let step = cholesky_solve(&h, &grad);
        let slope: f64 = -step.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>();
        // Newton decrement: stop once the model predicts no relative progress.
        if -0.5 * slope <= 1e-13 * f.abs() {
            return Ok((y, it - 1, false));
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let yn: Vec<f64> = y.iter().zip(&step).map(|(a, d)| a - alpha * d).collect();
            let on = p.observable(&yn)?;
            let fnew = value(&yn, p.problem.violation(on));
            if fnew <= f + 1e-4 * alpha * slope {
                accepted = Some((yn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((yn, fnew)) = accepted else {
            return Ok((y, it, gn > 1e3 * grad_tol));
        };
        if fnew < f - 1e-15 * f.abs() {
            since_decrease = 0;
        } else {
            since_decrease += 1;
            if since_decrease >= 20 {
                return Ok((yn, it, true));
            }
        }
        y = yn;
        f = fnew;
        (o, og) = p.observable_grad(&y)?;
    }
    Ok((y, max_iter, false))
}

fn run_start(p: &Problem<'_>, y0: Vec<f64>, gap: f64, rate_hint: f64, opts: &RateOptions) -> Result<Outcome> {
    let ridge = 1e-12;
    let mut y = y0;
    // With μ = 2·rate/gap² the penalty and the action balance at first order.
    let mut mu = 2.0 * rate_hint.max(1e-12) / (gap * gap).max(1e-300);
    let grad_tol = 1e-9 * (1.0 + libm::sqrt(2.0 * rate_hint));
    let mut stalled = false;
    let mut iterations = 0;
    let mut obs = p.observable(&y)?;
    for _ in 0..opts.max_penalty_rounds {
        let (yn, it, st) = penalty_round(p, y, mu, ridge, grad_tol, opts.max_iter)?;
        y = yn;
        iterations += it;
        stalled |= st;
        obs = p.observable(&y)?;
        if p.problem.violation(obs) < opts.violation_tol * gap {
            break;
        }
        mu *= 2.0;
    }
    // Scale onto the feasible side when the penalty leaves a small violation.
    if p.problem.violation(obs) > 0.0 {
        let mut hi = 1.01;
        let mut found = false;
        for _ in 0..8 {
            let yh: Vec<f64> = y.iter().map(|v| v * hi).collect();
            if p.problem.is_met(p.observable(&yh)?) {
                found = true;
                break;
            }
            hi = 1.0 + 2.0 * (hi - 1.0);
        }
        if found {
            let mut lo = 1.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let ym: Vec<f64> = y.iter().map(|v| v * mid).collect();
                if p.problem.is_met(p.observable(&ym)?) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            y = y.iter().map(|v| v * hi).collect();
            obs = p.observable(&y)?;
        }
    }
    Ok(Outcome { rate: p.action(&y), violation: p.problem.violation(obs), obs, y, stalled, iterations })
}

/// Minimizes the action over the reduced basis subject to the terminal
/// constraint. `init` (projected onto the basis) is the first start.
pub fn minimize_rate(
    grid: &SpaceTimeGrid,
    params: &HParams,
    problem: &RateProblem,
    sigma: &SigmaSpec,
    init: &ControlPath,
    opts: &RateOptions,
) -> Result<RateResult> {
    if !init.action().is_finite() {
        return Err(Error::Domain("initial control has infinite action".into()));
    }
    let basis = match &opts.basis {
        Some(b) => b.clone(),
        None => BasisSpec::for_problem(problem, grid.time.horizon())?,
    };
    if basis.is_empty() || basis.len() > 32 {
        return Err(Error::Config(format!("basis size must be in 1..=32, got {}", basis.len())));
    }
    let solver = SkeletonSolver::new(grid, params);
    let functions = basis.functions(grid, params)?;
    let nb = functions.len();
    let ops = solver.operators().clone();
    let specs: Vec<Vec<Vec<Complex64>>> =
        functions.iter().map(|f| f.profiles().iter().map(|p| grid.space.forward(p)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
    let mut raw_gram = vec![0.0; nb * nb];
    for i in 0..nb {
        for j in 0..=i {
            let v: f64 = (0..grid.time.n_steps()).map(|k| ops.step_inner(&specs[i][k], &specs[j][k])).sum();
            raw_gram[i * nb + j] = v;
            raw_gram[j * nb + i] = v;
        }
    }
    let scale: Vec<f64> = (0..nb).map(|i| 1.0 / libm::sqrt(raw_gram[i * nb + i].max(1e-300))).collect();
    let gram: Vec<f64> = (0..nb * nb).map(|ij| raw_gram[ij] * scale[ij / nb] * scale[ij % nb]).collect();
    let drifts = functions.iter().map(|f| solver.drifts(f, 0.0)).collect::<Result<Vec<_>>>()?;
    let probe = Probe::new(&grid.space, problem.observable)?;
    let p = Problem { solver, sigma, problem: *problem, probe, drifts, gram, scale, tol: opts.picard_tol, max_iter: opts.picard_max_iter };
    let zero = vec![0.0; nb];
    let obs0 = p.observable(&zero)?;
    let mut flags = Vec::new();
    if problem.is_met(obs0) {
        return finish(grid, params, &p, basis, zero, obs0, 0, true, 0.0, Vec::new(), flags, opts);
    }
    let gap = problem.violation(obs0);

    // Projection of `init` onto the basis: G c = b.
    let mut b = vec![0.0; nb];
    if !init.is_zero() {
        let ispec = init.profiles().iter().map(|q| grid.space.forward(q)).collect::<Result<Vec<_>>>()?;
        for (i, bi) in b.iter_mut().enumerate() {
            *bi = (0..grid.time.n_steps()).map(|k| ops.step_inner(&specs[i][k], &ispec[k])).sum::<f64>() * p.scale[i];
        }
    }
    let mut starts: Vec<(String, Vec<f64>)> = vec![(String::from("init"), cholesky_solve(&p.gram, &b))];

    // Oracle-shaped start: the centre translate in every block, scaled along
    // the linearization to hit the level.
    let per_block = basis.centres.len();
    let shape: Vec<f64> = (0..nb).map(|i| if i % per_block == 0 { 1.0 / p.scale[i] } else { 0.0 }).collect();
    let probe_scale = {
        // Violation is affine in the scale for the linear case: solve for 0.
        let mut s = 1.0;
        let mut found = 0.0;
        for _ in 0..60 {
            let ys: Vec<f64> = shape.iter().map(|v| v * s).collect();
            let vs = problem.violation(p.observable(&ys)?);
            if (vs - gap).abs() > 1e-9 * (1.0 + gap) {
                found = s * gap / (gap - vs);
                break;
            }
            s *= 4.0;
        }
        found
    };
    let oracle: Vec<f64> = shape.iter().map(|v| v * probe_scale).collect();
    let rate_hint = p.action(&oracle);
    let typical = libm::sqrt(oracle.iter().map(|v| v * v).sum::<f64>()).max(1e-12);
    starts.push((String::from("oracle"), oracle));
    for r in 0..opts.random_starts {
        let mut rng = keyed_rng(opts.seed, Channel::Optimizer, r as u64, 0);
        let y: Vec<f64> = (0..nb).map(|_| typical / libm::sqrt(nb as f64) * rng.sample::<f64, _>(StandardNormal)).collect();
        starts.push((format!("random{r}"), y));
    }

    let mut reports = Vec::new();
    let mut best: Option<Outcome> = None;
    let mut total_iter = 0;
    for (label, y0) in starts {
        let out = run_start(&p, y0, gap, rate_hint, opts)?;
        total_iter += out.iterations;
        let feasible = out.violation <= 0.0;
        reports.push(StartReport { label, rate: out.rate, feasible, stalled: out.stalled, iterations: out.iterations });
        let better = match &best {
            None => true,
            Some(b) => {
                let bf = b.violation <= 0.0;
                (feasible && !bf) || (feasible == bf && out.rate < b.rate * (1.0 - 1e-9))
            }
        };
        if better {
            best = Some(out);
        }
    }
    let best = best.expect("at least one start");
    let feasible_rates: Vec<f64> = reports.iter().filter(|r| r.feasible).map(|r| r.rate).collect();
    let dispersion = if feasible_rates.len() > 1 {
        let lo = feasible_rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = feasible_rates.iter().cloned().fold(0.0, f64::max);
        if lo > 0.0 {
            (hi - lo) / lo
        } else {
            0.0
        }
    } else {
        0.0
    };
    if dispersion > 0.01 {
        flags.push(format!("local minima disagree: dispersion {dispersion:.3e}"));
    }
    let certified = !best.stalled;
    if !certified {
        flags.push(String::from("optimizer stalled: best-so-far, not certified"));
    }
    finish(grid, params, &p, basis, best.y, best.obs, total_iter, certified, dispersion, reports, flags, opts)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    grid: &SpaceTimeGrid,
    params: &HParams,
    p: &Problem<'_>,
    basis: BasisSpec,
    y: Vec<f64>,
    obs: f64,
    iterations: usize,
    certified: bool,
    dispersion: f64,
    starts: Vec<StartReport>,
    mut flags: Vec<String>,
    opts: &RateOptions,
) -> Result<RateResult> {
    let coefficients = p.coeffs(&y);
    let optimal_g = basis.control(grid, params, &coefficients)?;
    let rate = optimal_g.action();
    let violation = p.problem.violation(obs);
    let feasible = violation <= 0.0;
    if !feasible {
        flags.push(format!("constraint violated by {violation:.3e}"));
    }
    if let Some(n) = opts.budget {
        if rate > n {
            flags.push(format!("rate {rate:.6e} exceeds the budget N = {n}: control outside S^N"));
        }
    }
    let stationarity = if y.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        let gy = p.gram_times(&y);
        let (_, og) = p.observable_grad(&y)?;
        let dd: f64 = og.iter().map(|v| v * v).sum();
        let lam = if dd > 0.0 { gy.iter().zip(&og).map(|(a, b)| a * b).sum::<f64>() / dd } else { 0.0 };
        let r: f64 = gy.iter().zip(&og).map(|(a, b)| (a - lam * b).powi(2)).sum();
        let n: f64 = gy.iter().map(|v| v * v).sum();
        libm::sqrt(r / n.max(1e-300))
    };
    Ok(RateResult {
        rate,
        optimal_g,
        basis,
        coefficients,
        achieved_observable: obs,
        feasibility_residual: violation.max(0.0),
        feasible,
        optimizer_iterations: iterations,
        stationarity,
        certified,
        dispersion,
        starts,
        flags,
    })
}

/// Upper-bound certificate for a feasible control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    /// `I ≤ action(g)`.
    pub upper_bound: f64,
    pub observable: f64,
    pub violation: f64,
    pub picard_tol: f64,
    pub picard_iterations: usize,
}

/// Re-solves the skeleton for `result.optimal_g` at tolerance 1e-14 and
/// certifies `I ≤ action(g)` if the constraint still holds.
pub fn rate_certificate(
    grid: &SpaceTimeGrid,
    params: &HParams,
    problem: &RateProblem,
    sigma: &SigmaSpec,
    result: &RateResult,
) -> Result<RateCertificate> {
    let tol = 1e-14;
    let sol = SkeletonSolver::new(grid, params).picard(&result.optimal_g, 0.0, sigma, tol, 1000)?;
    let probe = Probe::new(&grid.space, problem.observable)?;
    let value = probe.eval_field(&grid.space, sol.u.terminal())?;
    let violation = problem.violation(value);
    let slack = 1e-12 * (1.0 + problem.level.abs());
    if violation > slack {
        return Err(Error::Validation(format!("certificate refused: constraint violated by {violation:.3e} at tolerance {tol:e}")));
    }
    Ok(RateCertificate {
        upper_bound: action(grid, &result.optimal_g, params)?,
        observable: value,
        violation,
        picard_tol: tol,
        picard_iterations: sol.picard_iterations,
    })
}

/// `a² / 2V(T)`: the rate of `u(T,x) ≥ 1 + a` when `σ ≡ 1`.
pub fn linear_rate_oracle(params: &HParams, horizon: f64, a: f64) -> f64 {
    a * a / (2.0 * params.variance_integral(horizon))
}
