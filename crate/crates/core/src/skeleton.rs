//! Controls and the deterministic skeleton equation.
//!
//! A control on the time grid is stored step by step: on `[t_k, t_{k+1})` it
//! is `g(s,·) = S(t_{k+1} - s) φ_k` for a profile `φ_k`. Controls of this form
//! pair exactly with the heat-convolved noise increments, so the skeleton
//! scheme, the controlled SHE scheme and the discrete Girsanov weight all use
//! the same per-mode factors.
//!
//! The skeleton scheme is
//! `u_{k+1} = S(dt) u_k + σ(t_k, x, u_k(x)) · m_k(x)` with
//! `m_k(x) = ∫_{t_k}^{t_{k+1}} ⟨p_{t_{k+1}-s}(x-·), g(s,·)⟩_{H_ε} ds`,
//! the time integral being exact for each Fourier mode.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::SigmaSpec;
use crate::discretization::{Field, Path, SpaceGrid, SpaceTimeGrid};
use crate::error::{shape_check, Error, Result};
use crate::noise::convolution_factor;
use crate::norms::{lambda_weights, path_metric_dc};
use crate::rough_space::{HParams, SpectralForm};

/// Per-mode factors shared by the skeleton and SHE schemes for one time step.
#[derive(Debug, Clone)]
pub struct StepOperators {
    /// `e^{-dt ξ²}`.
    pub heat: Vec<f64>,
    /// `c1 W_k (1 - e^{-2dtξ²}) / 2ξ²`: the law of the convolved increment
    /// and the weight of the step action.
    pub mode_variance: Vec<f64>,
    dx: f64,
    two_l: f64,
}

impl StepOperators {
    pub fn new(grid: &SpaceTimeGrid, params: &HParams) -> Self {
        let space = &grid.space;
        let dt = grid.time.dt();
        let cells = space.cell_weights(params.alpha());
        let heat = space.freqs().iter().map(|xi| libm::exp(-dt * xi * xi)).collect();
        let mode_variance = space.freqs().iter().zip(&cells).map(|(&xi, w)| params.c1 * w * convolution_factor(dt, xi)).collect();
        Self { heat, mode_variance, dx: space.dx(), two_l: 2.0 * space.half_width() }
    }

    /// Multiplier taking `φ̂_k` to `m̂_k` at mollification level `eps`.
    pub fn drift_multiplier(&self, freqs: &[f64], eps: f64) -> Vec<f64> {
        self.mode_variance.iter().zip(freqs).map(|(v, xi)| self.two_l * v * libm::exp(-eps * xi * xi)).collect()
    }

    /// Step action `½ ∫_{t_k}^{t_{k+1}} ‖S(t_{k+1}-s)φ‖²_H ds` from the raw DFT of `φ`.
    pub fn step_action(&self, spec: &[Complex64]) -> f64 {
        let s: f64 = self.mode_variance.iter().zip(spec).map(|(v, z)| v * z.norm_sqr()).sum();
        0.5 * self.dx * self.dx * s
    }

    /// Bilinear form behind [`StepOperators::step_action`] (without the ½).
    pub fn step_inner(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        let s: f64 = self.mode_variance.iter().zip(a.iter().zip(b)).map(|(v, (x, y))| v * (x.re * y.re + x.im * y.im)).sum();
        self.dx * self.dx * s
    }
}

/// A control `g` given by its per-step profiles, with its cached action
/// `½∫_0^T ‖g(s)‖²_H ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    profiles: Vec<Field>,
    action: f64,
}

impl ControlPath {
    pub fn new(grid: &SpaceTimeGrid, params: &HParams, profiles: Vec<Field>) -> Result<Self> {
        shape_check(grid.time.n_steps(), profiles.len())?;
        for p in &profiles {
            grid.space.check(p)?;
            if !p.is_finite() {
                return Err(Error::Domain("control profile is not finite".into()));
            }
        }
        let ops = StepOperators::new(grid, params);
        let mut action = 0.0;
        for p in &profiles {
            action += ops.step_action(&grid.space.forward(p)?);
        }
        Ok(Self { profiles, action })
    }

    /// The zero control.
    pub fn zero(grid: &SpaceTimeGrid) -> Self {
        let n = grid.space.n_points();
        Self { profiles: vec![Field::zeros(n); grid.time.n_steps()], action: 0.0 }
    }

    /// Builds the control from a profile generator `f(k, t_k, t_{k+1})`.
    pub fn from_steps(grid: &SpaceTimeGrid, params: &HParams, f: impl Fn(usize, f64, f64) -> Field) -> Result<Self> {
        let profiles = (0..grid.time.n_steps()).map(|k| f(k, grid.time.t(k), grid.time.t(k + 1))).collect();
        Self::new(grid, params, profiles)
    }

    pub fn profiles(&self) -> &[Field] {
        &self.profiles
    }

    pub fn n_steps(&self) -> usize {
        self.profiles.len()
    }

    /// `½∫_0^T ‖g(s)‖²_H ds`.
    pub fn action(&self) -> f64 {
        self.action
    }

    /// Membership in `S^N = {g : action ≤ N}`.
    pub fn in_budget(&self, budget: f64) -> bool {
        self.action <= budget
    }

    pub fn is_zero(&self) -> bool {
        self.profiles.iter().all(|p| p.values().iter().all(|v| *v == 0.0))
    }

    /// `c·g`, with action `c²·action(g)`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { profiles: self.profiles.iter().map(|p| p.scaled(c)).collect(), action: c * c * self.action }
    }

    /// `g + c·h`.
    pub fn axpy(&self, grid: &SpaceTimeGrid, params: &HParams, c: f64, other: &ControlPath) -> Result<Self> {
        shape_check(self.n_steps(), other.n_steps())?;
        let profiles = self.profiles.iter().zip(&other.profiles).map(|(a, b)| a.axpy(c, b)).collect::<Result<Vec<_>>>()?;
        Self::new(grid, params, profiles)
    }

    /// `g(s, ·)` on the grid.
    pub fn g_at(&self, grid: &SpaceTimeGrid, s: f64) -> Result<Field> {
        let t = &grid.time;
        if !(0.0..=t.horizon()).contains(&s) {
            return Err(Error::Domain(format!("time {s} outside [0, {}]", t.horizon())));
        }
        let k = ((s / t.dt()) as usize).min(t.n_steps() - 1);
        let lag = (t.t(k + 1) - s).max(0.0);
        crate::heat_kernel::semigroup_apply(&grid.space, lag, &self.profiles[k])
    }
}

/// `½∫_0^T ‖g(s)‖²_H ds` recomputed from the profiles.
pub fn action(grid: &SpaceTimeGrid, g: &ControlPath, params: &HParams) -> Result<f64> {
    shape_check(grid.time.n_steps(), g.n_steps())?;
    let ops = StepOperators::new(grid, params);
    let mut a = 0.0;
    for p in g.profiles() {
        a += ops.step_action(&grid.space.forward(p)?);
    }
    Ok(a)
}

/// `½∫ ‖g(s)‖²_H ds` for a control known only at sample times, by the
/// trapezoid rule in time and the spectral form in space.
pub fn action_sampled(grid: &SpaceGrid, params: &HParams, times: &[f64], fields: &[Field]) -> Result<f64> {
    shape_check(times.len(), fields.len())?;
    if times.len() < 2 {
        return Err(Error::Domain("need at least two time samples".into()));
    }
    let form = SpectralForm::new(grid, params, 0.0);
    let norms = fields.iter().map(|f| form.norm_sq(grid, f)).collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for i in 1..times.len() {
        total += 0.5 * (times[i] - times[i - 1]) * (norms[i] + norms[i - 1]);
    }
    Ok(0.5 * total)
}

/// Output of [`picard_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSolution {
    pub u: Path,
    pub eps_used: f64,
    pub picard_iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

impl SkeletonSolution {
    /// `u(T, x)` by band-limited evaluation of the terminal slice.
    pub fn terminal_value(&self, grid: &SpaceGrid, x: f64) -> Result<f64> {
        crate::she::point_value(grid, self.u.terminal(), x)
    }
}

/// Picard solver for the skeleton equation on a fixed grid.
#[derive(Debug, Clone)]
pub struct SkeletonSolver {
    grid: SpaceTimeGrid,
    params: HParams,
    ops: StepOperators,
    lambda: Vec<f64>,
}

impl SkeletonSolver {
    pub fn new(grid: &SpaceTimeGrid, params: &HParams) -> Self {
        Self {
            grid: grid.clone(),
            params: *params,
            ops: StepOperators::new(grid, params),
            lambda: lambda_weights(&grid.space, params.hurst),
        }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn params(&self) -> &HParams {
        &self.params
    }

    pub fn operators(&self) -> &StepOperators {
        &self.ops
    }

    /// Drift fields `m_k` of a control at mollification level `eps`.
    pub fn drifts(&self, g: &ControlPath, eps: f64) -> Result<Vec<Field>> {
        if !(eps >= 0.0) {
            return Err(Error::Domain(format!("mollification level must be non-negative, got {eps}")));
        }
        shape_check(self.grid.time.n_steps(), g.n_steps())?;
        let mult = self.ops.drift_multiplier(self.grid.space.freqs(), eps);
        g.profiles()
            .iter()
            .map(
                |p| {
                    if p.values().iter().all(|v| *v == 0.0) {
                        Ok(Field::zeros(p.len()))
                    } else {
                        self.grid.space.apply_multiplier(p, &mult)
                    }
                },
            )
            .collect()
    }

    /// Picard iteration from `u⁰ ≡ 1` at mollification level `eps ≥ 0`.
    ///
    /// The residual is `sup_k ‖u^{n+1}(t_k) - u^n(t_k)‖_{L²_λ}`.
    pub fn picard(&self, g: &ControlPath, eps: f64, sigma: &SigmaSpec, tol: f64, max_iter: usize) -> Result<SkeletonSolution> {
        if !(tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
        }
        let drifts = self.drifts(g, eps)?;
        self.picard_with_drifts(&drifts, eps, sigma, tol, max_iter)
    }

    pub(crate) fn picard_with_drifts(
        &self,
        drifts: &[Field],
        eps: f64,
        sigma: &SigmaSpec,
        tol: f64,
        max_iter: usize,
    ) -> Result<SkeletonSolution> {
        let space = &self.grid.space;
        let time = &self.grid.time;
        let n = space.n_points();
        let n_steps = time.n_steps();
        let xs = space.xs();
        let times = time.times();
        let zero_control = drifts.iter().all(|m| m.values().iter().all(|v| *v == 0.0));
        let mut prev: Vec<Field> = vec![Field::constant(n, 1.0); n_steps + 1];
        let mut history = Vec::new();
        for it in 1..=max_iter.max(1) {
            let mut next = Vec::with_capacity(n_steps + 1);
            next.push(Field::constant(n, 1.0));
            for k in 0..n_steps {
                let cur = &next[k];
                let mut v = if zero_control { cur.clone() } else { space.apply_multiplier(cur, &self.ops.heat)? };
                if !zero_control {
                    let t = times[k];
                    let src = prev[k].values();
                    for ((o, m), (&x, &u)) in v.values_mut().iter_mut().zip(drifts[k].values()).zip(xs.iter().zip(src)) {
                        *o += sigma.try_eval(t, x, u)? * m;
                    }
                }
                if !v.is_finite() {
                    return Err(Error::Numerical(format!("skeleton iterate not finite at step {k}")));
                }
                next.push(v);
            }
            let mut residual = 0.0f64;
            for (a, b) in next.iter().zip(&prev) {
                let sq: f64 = a.values().iter().zip(b.values()).zip(&self.lambda).map(|((x, y), w)| w * (x - y) * (x - y)).sum();
                residual = residual.max(libm::sqrt(sq));
            }
            history.push(residual);
            prev = next;
            if residual < tol {
                return Ok(SkeletonSolution {
                    u: Path { times, fields: prev },
                    eps_used: eps,
                    picard_iterations: it,
                    residual,
                    residual_history: history,
                });
            }
        }
        let residual = *history.last().unwrap_or(&f64::NAN);
        Err(Error::Convergence { iterations: max_iter, residual, history })
    }

    /// Runs [`SkeletonSolver::picard`] on each rung of a strictly decreasing
    /// ladder and reports successive rung differences in `d_C`.
    pub fn ladder(&self, g: &ControlPath, sigma: &SigmaSpec, ladder: &[f64], tol: f64, max_iter: usize) -> Result<LadderSolution> {
        if ladder.is_empty() {
            return Err(Error::Domain("empty ladder".into()));
        }
        if ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Domain("ladder must be strictly decreasing".into()));
        }
        if !(ladder[ladder.len() - 1] > 0.0) {
            return Err(Error::Domain("ladder must stay above 0".into()));
        }
        let mut differences = Vec::new();
        let mut iterations = Vec::new();
        let mut last: Option<SkeletonSolution> = None;
        for &eps in ladder {
            let sol = self.picard(g, eps, sigma, tol, max_iter)?;
            iterations.push(sol.picard_iterations);
            if let Some(prev) = &last {
                differences.push(path_metric_dc(&self.grid.space, &prev.u, &sol.u)?);
            }
            last = Some(sol);
        }
        let decreasing = differences.windows(2).all(|w| w[1] < w[0]) || g.is_zero();
        let warning = if decreasing { None } else { Some(format!("rung differences are not decreasing: {differences:?}")) };
        Ok(LadderSolution {
            solution: last.expect("non-empty ladder"),
            ladder: ladder.to_vec(),
            differences,
            iterations,
            decreasing,
            warning,
        })
    }

    /// Exact discrete Cauchy–Schwarz bound at grid point `j` of slice `n`:
    /// returns `(|u(t_n,x_j) - 1|, √(2·action) · ‖representer‖)`.
    ///
    /// The representer norm is the discrete counterpart of
    /// `(∫_0^t ‖p_{t-s}(x-·)σ(s,·,u)‖²_H ds)^{1/2}`.
    pub fn cauchy_schwarz(&self, sol: &SkeletonSolution, g: &ControlPath, sigma: &SigmaSpec, n: usize, j: usize) -> Result<(f64, f64)> {
        let space = &self.grid.space;
        let time = &self.grid.time;
        if n > time.n_steps() || j >= space.n_points() {
            return Err(Error::Domain(format!("index ({n}, {j}) outside the grid")));
        }
        let lhs = (sol.u.fields[n].values()[j] - 1.0).abs();
        let np = space.n_points();
        let xs = space.xs();
        let mut delta = Field::zeros(np);
        delta.values_mut()[j] = 1.0;
        let mut sum = 0.0;
        for k in 0..n {
            let lag = time.t(n) - time.t(k + 1);
            // Row j of S(lag), which is symmetric.
            let row = crate::heat_kernel::semigroup_apply(space, lag, &delta)?;
            let t = time.t(k);
            let w: Vec<f64> =
                row.values().iter().zip(sol.u.fields[k].values().iter().zip(&xs)).map(|(r, (&u, &x))| r * sigma.eval(t, x, u)).collect();
            let spec = space.forward(&Field::from_vec_unchecked(w))?;
            let mult = self.ops.drift_multiplier(space.freqs(), sol.eps_used);
            sum += spec
                .iter()
                .zip(&self.ops.mode_variance)
                .zip(&mult)
                .map(|((z, v), m)| {
                    let damp = m / (2.0 * space.half_width() * v.max(f64::MIN_POSITIVE));
                    v * damp * damp * z.norm_sqr()
                })
                .sum::<f64>();
        }
        Ok((lhs, libm::sqrt(2.0 * g.action()) * libm::sqrt(sum)))
    }
}

/// Output of [`SkeletonSolver::ladder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSolution {
    pub solution: SkeletonSolution,
    pub ladder: Vec<f64>,
    /// `d_C` between consecutive rungs.
    pub differences: Vec<f64>,
    pub iterations: Vec<usize>,
    pub decreasing: bool,
    pub warning: Option<String>,
}

/// Default Picard tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default Picard iteration cap.
pub const DEFAULT_MAX_ITER: usize = 50;
/// Default mollification ladder.
pub const DEFAULT_LADDER: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

/// One-shot [`SkeletonSolver::picard`].
pub fn picard_solve(
    grid: &SpaceTimeGrid,
    params: &HParams,
    g: &ControlPath,
    eps: f64,
    sigma: &SigmaSpec,
    tol: f64,
    max_iter: usize,
) -> Result<SkeletonSolution> {
    SkeletonSolver::new(grid, params).picard(g, eps, sigma, tol, max_iter)
}

/// One-shot [`SkeletonSolver::ladder`].
pub fn solve(
    grid: &SpaceTimeGrid,
    params: &HParams,
    g: &ControlPath,
    sigma: &SigmaSpec,
    ladder: &[f64],
    tol: f64,
) -> Result<LadderSolution> {
    SkeletonSolver::new(grid, params).ladder(g, sigma, ladder, tol, DEFAULT_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;
    use crate::heat_kernel::eval_p;

    fn setup() -> (SpaceTimeGrid, HParams) {
        (build_grid(8.0, 256, 1.0, 20).unwrap(), HParams::new(0.3).unwrap())
    }

    fn bump(grid: &SpaceTimeGrid, params: &HParams, amp: f64) -> ControlPath {
        ControlPath::from_steps(grid, params, |_, _, _| Field::from_fn(&grid.space, |x| amp * eval_p(0.5, x).unwrap())).unwrap()
    }

    #[test]
    fn zero_control_keeps_one() {
        let (grid, params) = setup();
        let sol = picard_solve(&grid, &params, &ControlPath::zero(&grid), 0.1, &SigmaSpec::affine(1.0, 0.0), 1e-8, 50).unwrap();
        assert_eq!(sol.picard_iterations, 1);
        for f in &sol.u.fields {
            assert!(f.values().iter().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn action_is_quadratic() {
        let (grid, params) = setup();
        let g = bump(&grid, &params, 0.7);
        let g2 = g.scaled(2.0);
        let a = action(&grid, &g, &params).unwrap();
        assert!((a - g.action()).abs() < 1e-12 * a);
        assert!((action(&grid, &g2, &params).unwrap() - 4.0 * a).abs() < 1e-12 * a);
        assert_eq!(action(&grid, &ControlPath::zero(&grid), &params).unwrap(), 0.0);
    }

    #[test]
    fn constant_sigma_converges_in_two_sweeps() {
        let (grid, params) = setup();
        let g = bump(&grid, &params, 0.5);
        let sol = picard_solve(&grid, &params, &g, 0.0, &SigmaSpec::constant(1.0), 1e-10, 50).unwrap();
        assert_eq!(sol.picard_iterations, 2);
        assert!(sol.u.terminal().values()[128] > 1.0);
    }

    #[test]
    fn affine_sigma_contracts() {
        let (grid, params) = setup();
        let g = bump(&grid, &params, 0.3);
        let sol = picard_solve(&grid, &params, &g, 0.05, &SigmaSpec::affine(1.0, 0.0), 1e-12, 50).unwrap();
        let h = &sol.residual_history;
        assert!(h.len() >= 3);
        for w in h.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn cauchy_schwarz_holds() {
        let (grid, params) = setup();
        let g = bump(&grid, &params, 0.4);
        let sigma = SigmaSpec::smooth(1.0, 0.5, 1.0);
        let solver = SkeletonSolver::new(&grid, &params);
        let sol = solver.picard(&g, 0.0, &sigma, 1e-12, 50).unwrap();
        for j in [100, 128, 140] {
            let (lhs, rhs) = solver.cauchy_schwarz(&sol, &g, &sigma, 20, j).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-9), "{lhs} > {rhs}");
        }
    }

    #[test]
    fn max_iter_reports_history() {
        let (grid, params) = setup();
        let g = bump(&grid, &params, 0.3);
        let err = picard_solve(&grid, &params, &g, 0.0, &SigmaSpec::affine(1.0, 0.0), 1e-14, 2).unwrap_err();
        match err {
            Error::Convergence { history, .. } => assert_eq!(history.len(), 2),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn ladder_rejects_bad_rungs() {
        let (grid, params) = setup();
        let g = ControlPath::zero(&grid);
        let s = SigmaSpec::constant(1.0);
        assert!(solve(&grid, &params, &g, &s, &[0.1, 0.2], 1e-8).is_err());
        assert!(solve(&grid, &params, &g, &s, &[0.1, 0.0], 1e-8).is_err());
        let r = solve(&grid, &params, &g, &s, &[0.2, 0.1], 1e-8).unwrap();
        assert_eq!(r.differences, vec![0.0]);
    }
}
