use proptest::prelude::*;
use roughshe::norms::path_metric_dc;
use roughshe::skeleton::*;
use roughshe::special::gamma;
use roughshe::{build_grid, Field, HParams, SigmaSpec, SpaceTimeGrid};
use std::f64::consts::PI;

fn gauss(t: f64, x: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

fn c1(h: f64) -> f64 {
    gamma(2.0 * h + 1.0) * (PI * h).sin() / (2.0 * PI)
}

/// `g(s) = p_{T-s+r}` on every step.
fn heat_control(grid: &SpaceTimeGrid, p: &HParams, r: f64, scale: f64) -> ControlPath {
    let horizon = grid.time.horizon();
    ControlPath::from_steps(grid, p, |_, _, t1| Field::from_fn(&grid.space, |x| scale * gauss(horizon - t1 + r, x))).unwrap()
}

#[test]
fn constant_sigma_terminal_value() {
    let h = 0.3;
    let (horizon, r, c) = (1.0, 0.5, 0.7);
    let grid = build_grid(32.0, 1024, horizon, 10).unwrap();
    let p = HParams::new(h).unwrap();
    let g = heat_control(&grid, &p, r, 1.0);
    let solver = SkeletonSolver::new(&grid, &p);
    for eps in [0.0, 0.05] {
        let sol = solver.picard(&g, eps, &SigmaSpec::constant(c), 1e-12, 50).unwrap();
        // 1 + c c1 Γ(1-H) ∫_0^T (2τ + r + ε)^{H-1} dτ
        let a = r + eps;
        let want = 1.0 + c * c1(h) * gamma(1.0 - h) * ((2.0 * horizon + a).powf(h) - a.powf(h)) / (2.0 * h);
        let got = sol.terminal_value(&grid.space, 0.0).unwrap();
        assert!(((got - 1.0) / (want - 1.0) - 1.0).abs() < 2e-3, "eps={eps}: {got} vs {want}");
        assert!(sol.picard_iterations <= 3);
    }
}

#[test]
fn action_of_a_heat_control() {
    let h = 0.35;
    let (horizon, r) = (1.0, 0.25);
    let grid = build_grid(32.0, 1024, horizon, 8).unwrap();
    let p = HParams::new(h).unwrap();
    let g = heat_control(&grid, &p, r, 2.0);
    // ½ · 4 · c1 Γ(1-H) ∫_0^T (2τ + 2r)^{H-1} dτ
    let want = 2.0 * c1(h) * gamma(1.0 - h) * ((2.0 * horizon + 2.0 * r).powf(h) - (2.0 * r).powf(h)) / (2.0 * h);
    assert!((g.action() / want - 1.0).abs() < 1e-3, "{} vs {want}", g.action());
    assert!((action(&grid, &g, &p).unwrap() - g.action()).abs() <= 1e-12 * want);
    assert!(g.in_budget(want * 1.01) && !g.in_budget(want * 0.99));
}

#[test]
fn sampled_action_of_a_frozen_profile() {
    let h = 0.3;
    let grid = build_grid(32.0, 1024, 1.0, 4).unwrap();
    let p = HParams::new(h).unwrap();
    let f = Field::from_fn(&grid.space, |x| gauss(1.0, x));
    let times: Vec<f64> = (0..=4).map(|k| k as f64 * 0.25).collect();
    let a = action_sampled(&grid.space, &p, &times, &vec![f; 5]).unwrap();
    let want = 0.5 * c1(h) * gamma(1.0 - h) * 2f64.powf(h - 1.0);
    assert!((a / want - 1.0).abs() < 1e-3, "{a} vs {want}");
}

#[test]
fn ladder_with_zero_control_stays_at_one() {
    let grid = build_grid(8.0, 64, 1.0, 5).unwrap();
    let p = HParams::new(0.3).unwrap();
    let lad = solve(&grid, &p, &ControlPath::zero(&grid), &SigmaSpec::affine(0.5, 1.0), &DEFAULT_LADDER, 1e-10).unwrap();
    for f in &lad.solution.u.fields {
        assert!(f.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }
    assert!(lad.differences.iter().all(|d| *d < 1e-14));
}

#[test]
fn ladder_approaches_the_unmollified_solution() {
    let grid = build_grid(8.0, 256, 1.0, 20).unwrap();
    let p = HParams::new(0.3).unwrap();
    let g = heat_control(&grid, &p, 0.3, 1.0);
    let sigma = SigmaSpec::smooth(1.0, 0.5, 1.0);
    let solver = SkeletonSolver::new(&grid, &p);
    let ladder = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let lad = solver.ladder(&g, &sigma, &ladder, 1e-10, 50).unwrap();
    assert!(lad.decreasing, "{:?}", lad.differences);
    let exact = solver.picard(&g, 0.0, &sigma, 1e-10, 50).unwrap();
    let gap = path_metric_dc(&grid.space, &lad.solution.u, &exact.u).unwrap();
    let last = *lad.differences.last().unwrap();
    assert!(gap < 5.0 * last, "gap {gap}, last step {last}");
}

#[test]
fn affine_sigma_picard_contracts() {
    let grid = build_grid(8.0, 128, 1.0, 10).unwrap();
    let p = HParams::new(0.4).unwrap();
    let g = heat_control(&grid, &p, 0.2, 1.5);
    let sol = picard_solve(&grid, &p, &g, 0.0, &SigmaSpec::affine(0.3, 1.0), 1e-12, 50).unwrap();
    assert!(sol.residual <= 1e-12);
    let hist = &sol.residual_history;
    assert!(hist.windows(2).all(|w| w[1] < w[0]), "{hist:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn action_is_quadratic_and_additive(a in -3.0f64..3.0, r1 in 0.1f64..1.0, r2 in 0.1f64..1.0) {
        let grid = build_grid(8.0, 128, 1.0, 4).unwrap();
        let p = HParams::new(0.3).unwrap();
        let g1 = heat_control(&grid, &p, r1, 1.0);
        let g2 = heat_control(&grid, &p, r2, 1.0);
        let s = g1.scaled(a);
        prop_assert!((s.action() - a * a * g1.action()).abs() <= 1e-12 * g1.action().max(1e-300) * (1.0 + a * a));
        // parallelogram law
        let sum = g1.axpy(&grid, &p, 1.0, &g2).unwrap();
        let diff = g1.axpy(&grid, &p, -1.0, &g2).unwrap();
        let lhs = sum.action() + diff.action();
        let rhs = 2.0 * (g1.action() + g2.action());
        prop_assert!((lhs - rhs).abs() <= 1e-11 * rhs);
    }

    #[test]
    fn constant_sigma_is_linear_in_the_control(c in 0.1f64..2.0, k in 0.2f64..3.0) {
        let grid = build_grid(8.0, 128, 1.0, 5).unwrap();
        let p = HParams::new(0.35).unwrap();
        let solver = SkeletonSolver::new(&grid, &p);
        let g = heat_control(&grid, &p, 0.4, 1.0);
        let u1 = solver.picard(&g, 0.0, &SigmaSpec::constant(c), 1e-13, 20).unwrap();
        let uk = solver.picard(&g.scaled(k), 0.0, &SigmaSpec::constant(c), 1e-13, 20).unwrap();
        let d1 = u1.terminal_value(&grid.space, 0.3).unwrap() - 1.0;
        let dk = uk.terminal_value(&grid.space, 0.3).unwrap() - 1.0;
        prop_assert!((dk - k * d1).abs() <= 1e-10 * (k * d1).abs());
    }
}
