//! Monte Carlo experiments: exponential-rate scans, importance sampling with
//! the discrete Girsanov weight, and the shifted-versus-skeleton convergence
//! experiment.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::coefficients::SigmaSpec;
use crate::discretization::SpaceTimeGrid;
use crate::error::{Error, Result};
use crate::norms::path_metric_dc;
use crate::rate::RateProblem;
use crate::rough_space::HParams;
use crate::she::{skeleton_reference, solve_stochastic, BatchRequest, Probe, SheSolver};
use crate::skeleton::ControlPath;
use crate::special::normal_sf;
use crate::stats::{linear_fit, mann_kendall_decreasing, par_map, wilson, Proportion, TrendTest};

/// Probability estimate with its standard error and effective sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    /// Effective sample size of the hitting weights (`n_paths` hits for plain MC).
    pub ess: f64,
    pub n_paths: usize,
    pub hits: usize,
    pub warning: Option<String>,
}

impl ProbabilityEstimate {
    pub fn log_p(&self) -> f64 {
        libm::log(self.p_hat)
    }

    /// Delta-method standard error of `log p̂`.
    pub fn log_p_stderr(&self) -> f64 {
        self.stderr / self.p_hat
    }
}

/// Plain Monte Carlo estimate of `P(constraint met)`.
#[allow(clippy::too_many_arguments)]
pub fn plain_probability(
    grid: &SpaceTimeGrid,
    params: &HParams,
    problem: &RateProblem,
    sigma: &SigmaSpec,
    eps: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    let batch = solve_stochastic(grid, params, eps, sigma, n_paths, seed, &BatchRequest::observables(&[problem.observable]))?;
    let hits = batch.observable(0).iter().filter(|v| problem.is_met(**v)).count();
    let n = n_paths as f64;
    let p = hits as f64 / n;
    Ok(ProbabilityEstimate { p_hat: p, stderr: libm::sqrt(p * (1.0 - p) / n), ess: hits as f64, n_paths, hits, warning: None })
}

/// Importance-sampled `P(constraint met)` under the shift `W + ε^{-1/2}∫g`,
/// reweighted by the exact discrete likelihood ratio.
#[allow(clippy::too_many_arguments)]
pub fn importance_sampled_probability(
    grid: &SpaceTimeGrid,
    params: &HParams,
    problem: &RateProblem,
    sigma: &SigmaSpec,
    eps: f64,
    optimal_g: &ControlPath,
    n_paths: usize,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("noise scale ε must be positive, got {eps}")));
    }
    if n_paths < 2 {
        return Err(Error::Domain("importance sampling needs at least 2 paths".into()));
    }
    let solver = SheSolver::new(grid, params, sigma, eps, Some(optimal_g))?;
    let batch = solver.batch(n_paths, seed, &BatchRequest::observables(&[problem.observable]))?;
    let vals: Vec<f64> = batch.runs.iter().map(|r| if problem.is_met(r.observables[0]) { libm::exp(r.log_weight) } else { 0.0 }).collect();
    let n = n_paths as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let hits = vals.iter().filter(|v| **v > 0.0).count();
    let s1: f64 = vals.iter().sum();
    let s2: f64 = vals.iter().map(|v| v * v).sum();
    let ess = if s2 > 0.0 { s1 * s1 / s2 } else { 0.0 };
    let warning = (ess < 10.0).then(|| format!("weight degeneracy: effective sample size {ess:.1}"));
    Ok(ProbabilityEstimate { p_hat: mean, stderr: libm::sqrt(var / n), ess, n_paths, hits, warning })
}

/// `P(u(T,x) ≥ 1 + a)` for `σ ≡ 1` given the variance `V` of `u(T,x)`.
pub fn gaussian_tail(a: f64, eps: f64, variance: f64) -> f64 {
    normal_sf(a / libm::sqrt(eps * variance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMethod {
    Plain,
    Importance,
    /// Plain Monte Carlo saw no hits and no control was available.
    NeedsImportanceSampling,
}

impl ScanMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanMethod::Plain => "plain",
            ScanMethod::Importance => "importance",
            ScanMethod::NeedsImportanceSampling => "needs importance sampling",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpRung {
    pub eps: f64,
    pub method: ScanMethod,
    pub estimate: ProbabilityEstimate,
    pub log_p: Option<f64>,
    pub log_p_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpScanResult {
    pub rungs: Vec<LdpRung>,
    /// Slope `s` of `log P̂ ≈ b + s/ε` over rungs with hits.
    pub fitted_slope: Option<f64>,
    /// Candidate rate `I`; the principle predicts a slope of `-I`.
    pub oracle_rate: Option<f64>,
}

/// Scan settings.
#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    /// Control used once plain MC expects fewer than 5 hits.
    pub optimal_g: Option<ControlPath>,
    /// Candidate rate; drives the switch rule and is reported.
    pub rate: Option<f64>,
    /// Use importance sampling on every rung.
    pub always_importance: bool,
}

/// Rare-event scan over a decreasing `ε` ladder.
#[allow(clippy::too_many_arguments)]
pub fn ldp_scan(
    grid: &SpaceTimeGrid,
    params: &HParams,
    problem: &RateProblem,
    sigma: &SigmaSpec,
    ladder: &[f64],
    n_paths: usize,
    seed: u64,
    opts: &ScanOptions,
) -> Result<LdpScanResult> {
    if ladder.is_empty() || ladder.windows(2).any(|w| !(w[1] < w[0])) || !(ladder[ladder.len() - 1] > 0.0) {
        return Err(Error::Domain("ladder must be positive and strictly decreasing".into()));
    }
    if n_paths < 1000 {
        return Err(Error::Domain(format!("a scan needs at least 1000 paths per rung, got {n_paths}")));
    }
    let rate = opts.rate.or_else(|| opts.optimal_g.as_ref().map(|g| g.action()));
    let mut rungs = Vec::with_capacity(ladder.len());
    for (r, &eps) in ladder.iter().enumerate() {
        let rung_seed = seed.wrapping_add(r as u64);
        let expected = rate.map(|i| n_paths as f64 * libm::exp(-i / eps));
        let want_is = opts.always_importance || expected.is_some_and(|e| e < 5.0);
        let (method, estimate) = match (&opts.optimal_g, want_is) {
            (Some(g), true) => {
                (ScanMethod::Importance, importance_sampled_probability(grid, params, problem, sigma, eps, g, n_paths, rung_seed)?)
            }
            _ => {
                let est = plain_probability(grid, params, problem, sigma, eps, n_paths, rung_seed)?;
                let m = if est.hits == 0 { ScanMethod::NeedsImportanceSampling } else { ScanMethod::Plain };
                (m, est)
            }
        };
        let finite = estimate.p_hat > 0.0;
        rungs.push(LdpRung {
            eps,
            method,
            log_p: finite.then(|| estimate.log_p()),
            log_p_stderr: finite.then(|| estimate.log_p_stderr()),
            estimate,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rungs.iter().filter_map(|r| r.log_p.map(|l| (1.0 / r.eps, l))).unzip();
    let fitted_slope = (xs.len() >= 2).then(|| linear_fit(&xs, &ys).1);
    Ok(LdpScanResult { rungs, fitted_slope, oracle_rate: rate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionBRung {
    pub eps: f64,
    pub exceedance: Proportion,
    pub median_distance: f64,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionBReport {
    pub delta: f64,
    pub rungs: Vec<ConditionBRung>,
    pub trend: TrendTest,
    /// Whether the frequencies are non-increasing within their intervals.
    pub non_increasing: bool,
    pub warning: Option<String>,
}

/// Frequency of `d_C(ũ^ε, ū^ε) > δ` per rung, where `ũ^ε` solves the equation
/// shifted by `g^ε` and `ū^ε` the skeleton for `g^ε`.
///
/// `family` holds one control per rung, or a single control used on every
/// rung. All rungs share the noise lanes of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn condition_b_experiment(
    grid: &SpaceTimeGrid,
    params: &HParams,
    family: &[ControlPath],
    sigma: &SigmaSpec,
    ladder: &[f64],
    n_paths: usize,
    delta: f64,
    seed: u64,
) -> Result<ConditionBReport> {
    if family.is_empty() || (family.len() != 1 && family.len() != ladder.len()) {
        return Err(Error::Domain("need one control, or one per rung".into()));
    }
    if ladder.is_empty() || ladder.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Domain("ladder entries must be positive".into()));
    }
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be at least 1".into()));
    }
    let request = BatchRequest { keep_paths: true, ..BatchRequest::default() };
    let probes: [Probe; 0] = [];
    let mut rungs = Vec::with_capacity(ladder.len());
    for (r, &eps) in ladder.iter().enumerate() {
        let g = if family.len() == 1 { &family[0] } else { &family[r] };
        let reference = skeleton_reference(grid, params, g, sigma)?;
        let solver = SheSolver::new(grid, params, sigma, eps, Some(g))?;
        let dists = par_map(n_paths, |i| {
            let run = solver.run(seed, i as u64, &request, &probes)?;
            path_metric_dc(&grid.space, run.path.as_ref().expect("recorded path"), &reference)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let hits = dists.iter().filter(|d| **d > delta).count();
        let mut sorted = dists.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        rungs.push(ConditionBRung {
            eps,
            exceedance: wilson(hits, n_paths, 1.96),
            median_distance: sorted[sorted.len() / 2],
            mean_distance: dists.iter().sum::<f64>() / n_paths as f64,
        });
    }
    let freqs: Vec<f64> = rungs.iter().map(|r| r.exceedance.p_hat).collect();
    let trend = mann_kendall_decreasing(&freqs, 0.05);
    let non_increasing = rungs.windows(2).all(|w| w[1].exceedance.p_hat <= w[0].exceedance.upper);
    let warning = if trend.decreasing || freqs.iter().all(|f| *f == 0.0) {
        None
    } else {
        Some(format!("no significant decreasing trend (p = {:.3})", trend.p_value))
    };
    Ok(ConditionBReport { delta, rungs, trend, non_increasing, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;
    use crate::she::Observable;

    #[test]
    fn centred_target_is_a_coin_flip() {
        let grid = build_grid(8.0, 64, 1.0, 5).unwrap();
        let params = HParams::new(0.3).unwrap();
        let pr = RateProblem::at_least(Observable::PointValue { x: 0.0 }, 1.0);
        let r = ldp_scan(&grid, &params, &pr, &SigmaSpec::constant(1.0), &[0.2, 0.1], 4000, 3, &ScanOptions::default()).unwrap();
        for rung in &r.rungs {
            assert!((rung.estimate.p_hat - 0.5).abs() < 4.0 * rung.estimate.stderr + 1e-3);
        }
        assert!(r.fitted_slope.unwrap().abs() < 0.05);
    }

    #[test]
    fn deep_tail_is_flagged() {
        let grid = build_grid(8.0, 64, 1.0, 5).unwrap();
        let params = HParams::new(0.3).unwrap();
        let pr = RateProblem::at_least(Observable::PointValue { x: 0.0 }, 4.0);
        let r = ldp_scan(&grid, &params, &pr, &SigmaSpec::constant(1.0), &[0.05], 1000, 3, &ScanOptions::default()).unwrap();
        assert_eq!(r.rungs[0].method, ScanMethod::NeedsImportanceSampling);
        assert!(r.rungs[0].log_p.is_none());
    }

    #[test]
    fn zero_shift_is_plain() {
        let grid = build_grid(8.0, 64, 1.0, 5).unwrap();
        let params = HParams::new(0.3).unwrap();
        let pr = RateProblem::at_least(Observable::PointValue { x: 0.0 }, 1.2);
        let s = SigmaSpec::constant(1.0);
        let a = importance_sampled_probability(&grid, &params, &pr, &s, 0.1, &ControlPath::zero(&grid), 2000, 4).unwrap();
        let b = plain_probability(&grid, &params, &pr, &s, 0.1, 2000, 4).unwrap();
        assert!((a.p_hat - b.p_hat).abs() < 1e-15);
    }

    #[test]
    fn large_delta_never_exceeded() {
        let grid = build_grid(4.0, 32, 0.5, 5).unwrap();
        let params = HParams::new(0.3).unwrap();
        let rep = condition_b_experiment(&grid, &params, &[ControlPath::zero(&grid)], &SigmaSpec::constant(1.0), &[0.2, 0.1], 50, 10.0, 1)
            .unwrap();
        assert!(rep.rungs.iter().all(|r| r.exceedance.hits == 0));
    }
}
