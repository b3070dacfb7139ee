//! Subcommand implementations. Each writes its tables into an [`OutputDir`]
//! and returns details for the manifest.

use std::fmt;

use roughshe::coefficients::{describe, validate_hypothesis, Sweep};
use roughshe::experiments::{condition_b_experiment, gaussian_tail, ldp_scan, ScanOptions};
use roughshe::heat_kernel::{eval_p, kernel_identity_box, kernel_identity_d, KernelIntegralReport};
use roughshe::noise::{empirical_covariances, sheet_covariance, CovarianceSetup};
use roughshe::rate::{linear_rate_oracle, minimize_rate, rate_certificate, RateOptions, RateProblem, RateResult};
use roughshe::rough_space::{check_hurst, inner_product_fourier, inner_product_gagliardo, smooth_suite, MollifiedSpace};
use roughshe::she::{solve_stochastic, BatchRequest, Observable};
use roughshe::skeleton::SkeletonSolver;
use roughshe::stats::{mean_stderr, mean_var, variance_stderr};
use roughshe::{build_grid, ControlPath, Error, Field, HParams, SpaceGrid, SpaceTimeGrid};
use serde_json::{json, Value};

use crate::config::{RunConfig, SenseBlock};
use crate::output::{num, OutputDir};

/// Every subcommand of the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    VerifyKernels,
    NoiseTest,
    NormsTest,
    Skeleton,
    Simulate,
    Rate,
    LdpScan,
    ConditionB,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::VerifyKernels => "verify-kernels",
            Self::NoiseTest => "noise-test",
            Self::NormsTest => "norms-test",
            Self::Skeleton => "skeleton",
            Self::Simulate => "simulate",
            Self::Rate => "rate",
            Self::LdpScan => "ldp-scan",
            Self::ConditionB => "condition-b",
        }
    }
}

/// Why a run stopped; maps onto the exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// Bad input: exit 2.
    Validation(String),
    /// The numerics failed: exit 3.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "validation failure: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Convergence { .. } | Error::BlowUp { .. } | Error::Numerical(_) => Self::Numerical(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Validation(format!("cannot write output: {e}"))
    }
}

type Outcome = Result<Value, Failure>;

pub fn run(sub: Subcommand, cfg: &RunConfig, out: &mut OutputDir) -> Outcome {
    match sub {
        Subcommand::VerifyKernels => verify_kernels(cfg, out),
        Subcommand::NoiseTest => noise_test(cfg, out),
        Subcommand::NormsTest => norms_test(cfg, out),
        Subcommand::Skeleton => skeleton(cfg, out),
        Subcommand::Simulate => simulate(cfg, out),
        Subcommand::Rate => rate(cfg, out),
        Subcommand::LdpScan => ldp(cfg, out),
        Subcommand::ConditionB => condition_b(cfg, out),
    }
}

fn grid(cfg: &RunConfig) -> Result<SpaceTimeGrid, Failure> {
    let g = &cfg.grid;
    Ok(build_grid(g.half_width, g.n_points, g.horizon, g.n_steps)?)
}

/// Runs the hypothesis validator on the configured coefficient.
fn checked_sigma(cfg: &RunConfig) -> Result<(roughshe::SigmaSpec, Value), Failure> {
    let sigma = cfg.sigma();
    let sweep = Sweep::default_for(cfg.grid.half_width, cfg.grid.horizon);
    let report = validate_hypothesis(&sigma, cfg.model.hurst, &sweep)?;
    if !report.passed {
        return Err(Failure::Validation(format!(
            "σ = {} violates the hypothesis ({}):\n{}",
            report.label,
            report.failures().join(", "),
            describe(&report)
        )));
    }
    let details = serde_json::to_value(&report).expect("report serializes");
    Ok((sigma, details))
}

fn gaussian_control(cfg: &RunConfig, grid: &SpaceTimeGrid, params: &HParams) -> Result<ControlPath, Failure> {
    let c = cfg.experiment.control;
    let profile = Field::from_fn(&grid.space, |x| c.amplitude * (-(x - c.centre) * (x - c.centre) / (2.0 * c.width * c.width)).exp());
    Ok(ControlPath::from_steps(grid, params, |_, _, _| profile.clone())?)
}

fn problem(cfg: &RunConfig) -> RateProblem {
    let e = &cfg.experiment;
    match e.sense {
        SenseBlock::AtLeast => RateProblem::at_least(e.observable, e.level),
        SenseBlock::AtMost => RateProblem::at_most(e.observable, e.level),
    }
}

/// `a²/(2c²V(T))` when the target is `u(T,x) ≥ 1 + a` and `σ ≡ c`.
fn linear_oracle(cfg: &RunConfig, params: &HParams) -> Option<f64> {
    let c = cfg.sigma_is_constant()?;
    match (cfg.experiment.observable, cfg.experiment.sense) {
        (Observable::PointValue { .. }, SenseBlock::AtLeast) if c != 0.0 => {
            Some(linear_rate_oracle(params, cfg.grid.horizon, cfg.experiment.level - 1.0) / (c * c))
        }
        _ => None,
    }
}

fn verify_kernels(cfg: &RunConfig, out: &mut OutputDir) -> Outcome {
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    let mut push = |name: &str, r: KernelIntegralReport, rows: &mut Vec<Vec<String>>| {
        let ratio = r.fitted_exponent.exp2();
        let expected = r.reference_exponent.exp2();
        let err = (ratio - expected).abs() / expected;
        worst = worst.max(err);
        rows.push(vec![
            name.to_string(),
            num(r.hurst),
            num(r.t),
            num(r.value),
            num(r.reference_exponent),
            num(r.fitted_exponent),
            num(ratio),
            num(expected),
            num(err),
        ]);
    };
    for &h in &cfg.experiment.kernel_hursts {
        check_hurst(h)?;
        for &t in &cfg.experiment.kernel_times {
            push("d", kernel_identity_d(t, h)?, &mut rows);
            push("box", kernel_identity_box(t, h)?, &mut rows);
        }
    }
    out.csv(
        "kernel_reports.csv",
        &["identity", "hurst", "t", "value", "reference_exponent", "fitted_exponent", "ratio", "expected_ratio", "relative_error"],
        &rows,
    )?;
    Ok(json!({ "rows": rows.len(), "worst_relative_error": worst }))
}

fn noise_test(cfg: &RunConfig, out: &mut OutputDir) -> Outcome {
    let params = cfg.params();
    let space = SpaceGrid::new(cfg.grid.half_width, cfg.grid.n_points)?;
    let setup = CovarianceSetup { grid: &space, params: &params, n_steps: cfg.grid.n_steps, seed: cfg.seed };
    let t = cfg.grid.horizon;
    let pairs = &cfg.experiment.probe_pairs;
    let est = empirical_covariances(cfg.experiment.n_samples, t, pairs, &setup)?;
    let mut worst = 0.0f64;
    let rows: Vec<Vec<String>> = pairs
        .iter()
        .zip(&est)
        .map(|(&(x, y), e)| {
            let exact = sheet_covariance(t, x, y, params.hurst);
            let z = (e.value - exact) / e.stderr;
            worst = worst.max(z.abs());
            vec![num(x), num(y), num(e.value), num(e.stderr), num(exact), num(z)]
        })
        .collect();
    out.csv("noise_covariance.csv", &["x", "y", "empirical", "stderr", "exact", "z_score"], &rows)?;
    Ok(json!({ "t": t, "n_samples": cfg.experiment.n_samples, "worst_abs_z": worst }))
}

fn norms_test(cfg: &RunConfig, out: &mut OutputDir) -> Outcome {
    let params = cfg.params();
    let (l, n) = cfg.experiment.suite_grid;
    let grid = SpaceGrid::new(l, n)?;
    let h0 = MollifiedSpace::unmollified();
    let suite = smooth_suite(&grid);
    let mut forms = Vec::new();
    let mut worst_form = 0.0f64;
    let mut mollified = Vec::new();
    let mut monotone = true;
    for (name, phi) in &suite {
        let f = inner_product_fourier(&grid, phi, phi, &h0, &params)?;
        let g = inner_product_gagliardo(&grid, phi, phi, &params)?;
        let rel = (f - g).abs() / f.abs();
        worst_form = worst_form.max(rel);
        forms.push(vec![name.to_string(), num(f), num(g), num(rel)]);
        let mut prev = f64::INFINITY;
        for &eps in &cfg.experiment.mollification_levels {
            let v = inner_product_fourier(&grid, phi, phi, &MollifiedSpace::level(eps)?, &params)?;
            monotone &= v <= prev;
            prev = v;
            mollified.push(vec![name.to_string(), num(eps), num(v), num((v - f).abs() / f)]);
        }
    }
    out.csv("forms.csv", &["field", "fourier", "increment", "relative_difference"], &forms)?;
    out.csv("mollified.csv", &["field", "eps", "norm_sq", "relative_gap"], &mollified)?;
    let wide = SpaceGrid::new(2.0 * l, n)?;
    let mut heat = Vec::new();
    for &t in &cfg.experiment.heat_times {
        let p = Field::from_fn(&wide, |x| eval_p(t, x).unwrap_or(0.0));
        let numeric = inner_product_fourier(&wide, &p, &p, &h0, &params)?;
        let exact = params.heat_kernel_norm_sq(t);
        heat.push(vec![num(t), num(numeric), num(exact), num((numeric - exact).abs() / exact)]);
    }
    out.csv("heat_norms.csv", &["t", "numeric", "exact", "relative_error"], &heat)?;
    Ok(json!({ "worst_form_difference": worst_form, "mollified_monotone": monotone }))
}

fn skeleton(cfg: &RunConfig, out: &mut OutputDir) -> Outcome {
    let (sigma, hypothesis) = checked_sigma(cfg)?;
    let params = cfg.params();
    let grid = grid(cfg)?;
    let g = gaussian_control(cfg, &grid, &params)?;
    let solver = SkeletonSolver::new(&grid, &params);
    let s = &cfg.solver;
    let ladder = solver.ladder(&g, &sigma, &s.ladder, s.picard_tol, s.max_iter)?;
    let limit = solver.picard(&g, 0.0, &sigma, s.picard_tol, s.max_iter)?;
    let rows: Vec<Vec<String>> = ladder
        .ladder
        .iter()
        .enumerate()
        .map(|(i, eps)| {
            let diff = ladder.differences.get(i).map_or(String::new(), |d| num(*d));
            vec![num(*eps), ladder.iterations[i].to_string(), diff]
        })
        .collect();
    out.csv("skeleton_ladder.csv", &["eps", "picard_iterations", "d_c_to_next"], &rows)?;
    let fin = ladder.solution.u.terminal();
    let lim = limit.u.terminal();
    let rows: Vec<Vec<String>> =
        (0..grid.space.n_points()).map(|j| vec![num(grid.space.x(j)), num(fin.values()[j]), num(lim.values()[j])]).collect();
    out.csv("skeleton_terminal.csv", &["x", "u_finest_rung", "u_unmollified"], &rows)?;
    let rows: Vec<Vec<String>> =
        ladder.solution.residual_history.iter().enumerate().map(|(i, r)| vec![(i + 1).to_string(), num(*r)]).collect();
    out.csv("skeleton_residuals.csv", &["iteration", "residual"], &rows)?;
    Ok(json!({
        "action": g.action(),
        "ladder_decreasing": ladder.decreasing,
        "warning": ladder.warning,
        "unmollified_iterations": limit.picard_iterations,
        "hypothesis": hypothesis,
    }))
}

fn simulate(cfg: &RunConfig, out: &mut OutputDir) -> Outcome {
    let (sigma, hypothesis) = checked_sigma(cfg)?;
    let params = cfg.params();
    let grid = grid(cfg)?;
    let e = &cfg.experiment;
    let eps = cfg.model.eps;
    let request = BatchRequest { keep_paths: e.dump_trajectories, ..BatchRequest::observables(&[e.observable]) };
    let batch = solve_stochastic(&grid, &params, eps, &sigma, e.n_paths, cfg.seed, &request)?;
    let values = batch.observable(0);
    let rows: Vec<Vec<String>> = values.iter().enumerate().map(|(i, v)| vec![i.to_string(), num(*v)]).collect();
    out.csv("simulate_paths.csv", &["path", "observable"], &rows)?;
    let (mean, se) = mean_stderr(&values);
    let (_, var) = mean_var(&values);
    let var_se = if values.len() > 3 { variance_stderr(&values) } else { f64::NAN };
    let mean_ref = match e.observable {
        Observable::SupDeviation => f64::NAN,
        _ => 1.0,
    };
    let var_ref = match (cfg.sigma_is_constant(), e.observable) {
        (Some(c), Observable::PointValue { .. }) => eps * c * c * params.variance_integral(cfg.grid.horizon),
        _ => f64::NAN,
    };
    out.csv(
        "moments.csv",
        &["statistic", "value", "stderr", "reference"],
        &[vec!["mean".into(), num(mean), num(se), num(mean_ref)], vec!["variance".into(), num(var), num(var_se), num(var_ref)]],
    )?;
    if e.dump_trajectories {
        let n_times = grid.time.n_steps() + 1;
        let mut data = Vec::with_capacity(e.n_paths * n_times * grid.space.n_points());
        for run in &batch.runs {
            let path = run.path.as_ref().ok_or_else(|| Failure::Numerical("trajectory not recorded".into()))?;
            for f in &path.fields {
                data.extend_from_slice(f.values());
            }
        }
        out.binary("trajectories.bin", &[e.n_paths, n_times, grid.space.n_points()], &data, cfg.seed)?;
    }
    Ok(json!({ "eps": eps, "n_paths": e.n_paths, "mean": mean, "variance": var, "hypothesis": hypothesis }))
}

fn rate_options(cfg: &RunConfig) -> RateOptions {
    RateOptions {
        violation_tol: cfg.solver.violation_tol,
        random_starts: cfg.solver.random_starts,
        seed: cfg.seed,
        ..RateOptions::default()
    }
}

fn optimize(cfg: &RunConfig, sigma: &roughshe::SigmaSpec, grid: &SpaceTimeGrid, params: &HParams) -> Result<RateResult, Failure> {
    Ok(minimize_rate(grid, params, &problem(cfg), sigma, &ControlPath::zero(grid), &rate_options(cfg))?)
}

fn rate(cfg: &RunConfig, out: &mut OutputDir) -> Outcome {
    let (sigma, hypothesis) = checked_sigma(cfg)?;
    let params = cfg.params();
    let grid = grid(cfg)?;
    let res = optimize(cfg, &sigma, &grid, &params)?;
    let cert = rate_certificate(&grid, &params, &problem(cfg), &sigma, &res);
    let mut rows = Vec::new();
    for (k, p) in res.optimal_g.profiles().iter().enumerate() {
        let (t0, t1) = (num(grid.time.t(k)), num(grid.time.t(k + 1)));
        for (j, v) in p.values().iter().enumerate() {
            rows.push(vec![k.to_string(), t0.clone(), t1.clone(), num(grid.space.x(j)), num(*v)]);
        }
    }
    out.csv("rate_control.csv", &["step", "t_start", "t_end", "x", "phi"], &rows)?;
    let rows: Vec<Vec<String>> = res
        .starts
        .iter()
        .map(|s| vec![s.label.clone(), num(s.rate), s.feasible.to_string(), s.stalled.to_string(), s.iterations.to_string()])
        .collect();
    out.csv("rate_starts.csv", &["start", "rate", "feasible", "stalled", "iterations"], &rows)?;
    let oracle = linear_oracle(cfg, &params);
    let summary = json!({
        "rate": res.rate,
        "feasibility_residual": res.feasibility_residual,
        "feasible": res.feasible,
        "achieved_observable": res.achieved_observable,
        "basis": res.basis,
        "coefficients": res.coefficients,
        "stationarity": res.stationarity,
        "certified": res.certified,
        "dispersion": res.dispersion,
        "flags": res.flags,
        "certificate": cert.as_ref().ok(),
        "certificate_error": cert.as_ref().err().map(|e| e.to_string()),
        "linear_oracle": oracle,
    });
    out.json("rate.json", &summary)?;
    Ok(json!({ "rate": res.rate, "certified": cert.is_ok(), "linear_oracle": oracle, "hypothesis": hypothesis }))
}

fn ldp(cfg: &RunConfig, out: &mut OutputDir) -> Outcome {
    let (sigma, hypothesis) = checked_sigma(cfg)?;
    let params = cfg.params();
    let grid = grid(cfg)?;
    let res = optimize(cfg, &sigma, &grid, &params)?;
    let opts =
        ScanOptions { optimal_g: Some(res.optimal_g.clone()), rate: Some(res.rate), always_importance: cfg.experiment.always_importance };
    let ladder = &cfg.model.ladder;
    let scan = ldp_scan(&grid, &params, &problem(cfg), &sigma, ladder, cfg.experiment.n_paths, cfg.seed, &opts)?;
    let c = cfg.sigma_is_constant();
    let oracle = linear_oracle(cfg, &params);
    let rows: Vec<Vec<String>> = scan
        .rungs
        .iter()
        .map(|r| {
            let tail = match (c, oracle) {
                (Some(c), Some(_)) => {
                    num(gaussian_tail(cfg.experiment.level - 1.0, r.eps, c * c * params.variance_integral(cfg.grid.horizon)))
                }
                _ => String::new(),
            };
            vec![
                num(r.eps),
                r.estimate.n_paths.to_string(),
                num(r.estimate.p_hat),
                num(r.estimate.stderr),
                num(r.estimate.ess),
                r.method.as_str().to_string(),
                r.log_p.map_or(String::new(), num),
                r.log_p_stderr.map_or(String::new(), num),
                tail,
            ]
        })
        .collect();
    out.csv("ldp_scan.csv", &["eps", "n_paths", "p_hat", "stderr", "ess", "method", "log_p", "log_p_stderr", "gaussian_tail"], &rows)?;
    let slope_error = match (scan.fitted_slope, oracle) {
        (Some(s), Some(o)) if o > 0.0 => Some((-s - o).abs() / o),
        _ => None,
    };
    let summary = json!({
        "fitted_slope": scan.fitted_slope,
        "rate": res.rate,
        "linear_oracle": oracle,
        "slope_relative_error": slope_error,
        "warnings": scan.rungs.iter().filter_map(|r| r.estimate.warning.clone()).collect::<Vec<_>>(),
    });
    out.json("summary.json", &summary)?;
    Ok(json!({ "fitted_slope": scan.fitted_slope, "rate": res.rate, "hypothesis": hypothesis }))
}

fn condition_b(cfg: &RunConfig, out: &mut OutputDir) -> Outcome {
    let (sigma, hypothesis) = checked_sigma(cfg)?;
    let params = cfg.params();
    let grid = grid(cfg)?;
    let g = gaussian_control(cfg, &grid, &params)?;
    let e = &cfg.experiment;
    let report = condition_b_experiment(&grid, &params, std::slice::from_ref(&g), &sigma, &cfg.model.ladder, e.n_paths, e.delta, cfg.seed)?;
    let rows: Vec<Vec<String>> = report
        .rungs
        .iter()
        .map(|r| {
            let p = r.exceedance;
            vec![
                num(r.eps),
                p.trials.to_string(),
                p.hits.to_string(),
                num(p.p_hat),
                num(p.lower),
                num(p.upper),
                num(r.median_distance),
                num(r.mean_distance),
            ]
        })
        .collect();
    out.csv(
        "condition_b.csv",
        &["eps", "n_paths", "hits", "frequency", "wilson_lower", "wilson_upper", "median_distance", "mean_distance"],
        &rows,
    )?;
    let summary = json!({
        "delta": report.delta,
        "action": g.action(),
        "trend": report.trend,
        "non_increasing": report.non_increasing,
        "warning": report.warning,
    });
    out.json("summary.json", &summary)?;
    Ok(json!({ "non_increasing": report.non_increasing, "hypothesis": hypothesis }))
}
