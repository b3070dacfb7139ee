use roughshe::she::*;
use roughshe::skeleton::ControlPath;
use roughshe::stats::{mean_stderr, mean_var, variance_stderr};
use roughshe::{build_grid, Field, HParams, SigmaSpec, SpaceTimeGrid};
use std::f64::consts::PI;

fn gauss(t: f64, x: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

fn c1(h: f64) -> f64 {
    roughshe::special::gamma(2.0 * h + 1.0) * (PI * h).sin() / (2.0 * PI)
}

/// `c1 Σ_k W_k (1 - e^{-2Tξ_k²}) / 2ξ_k²` over the lattice, with `W_k` the
/// exact cell integrals of `|ξ|^{1-2H}`.
fn lattice_variance(grid: &SpaceTimeGrid, h: f64) -> f64 {
    let n = grid.space.n_points() as i64;
    let l = grid.space.half_width();
    let dxi = PI / l;
    let a = 2.0 - 2.0 * h;
    let prim = |x: f64| x.signum() * x.abs().powf(a) / a;
    let horizon = grid.time.horizon();
    let mut v = 0.0;
    for k in (-n / 2 + 1)..=(n / 2) {
        let xi = k as f64 * dxi;
        let w = if k == n / 2 { 2.0 * (prim(xi) - prim(xi - 0.5 * dxi)) } else { prim(xi + 0.5 * dxi) - prim(xi - 0.5 * dxi) };
        let tau = if k == 0 { horizon } else { -(-2.0 * horizon * xi * xi).exp_m1() / (2.0 * xi * xi) };
        v += w * tau;
    }
    c1(h) * v
}

fn point(x: f64) -> BatchRequest {
    BatchRequest::observables(&[Observable::PointValue { x }])
}

#[test]
fn constant_sigma_variance_matches_the_lattice_law() {
    let h = 0.3;
    let grid = build_grid(8.0, 256, 1.0, 10).unwrap();
    let p = HParams::new(h).unwrap();
    let eps = 0.1;
    let b = solve_stochastic(&grid, &p, eps, &SigmaSpec::constant(1.0), 4000, 17, &point(0.0)).unwrap();
    let v = b.observable(0);
    let (m, se) = mean_stderr(&v);
    assert!((m - 1.0).abs() < 4.0 * se, "mean {m} ± {se}");
    let (_, var) = mean_var(&v);
    let want = eps * lattice_variance(&grid, h);
    let vse = variance_stderr(&v);
    assert!((var - want).abs() < 4.0 * vse, "variance {var} ± {vse} vs {want}");
}

#[test]
fn constant_sigma_fluctuation_scales_with_root_eps() {
    let grid = build_grid(8.0, 128, 0.5, 8).unwrap();
    let p = HParams::new(0.35).unwrap();
    let sigma = SigmaSpec::constant(0.8);
    let a = solve_stochastic(&grid, &p, 0.04, &sigma, 16, 5, &point(0.5)).unwrap();
    let b = solve_stochastic(&grid, &p, 0.01, &sigma, 16, 5, &point(0.5)).unwrap();
    for (x, y) in a.observable(0).iter().zip(b.observable(0)) {
        assert!(((x - 1.0) / 0.2 - (y - 1.0) / 0.1).abs() < 1e-12);
    }
}

#[test]
fn affine_sigma_mean_follows_the_skeleton() {
    let grid = build_grid(8.0, 128, 1.0, 10).unwrap();
    let p = HParams::new(0.3).unwrap();
    let sigma = SigmaSpec::affine(0.4, 0.5);
    let g = ControlPath::from_steps(&grid, &p, |_, _, t1| Field::from_fn(&grid.space, |x| 2.0 * gauss(1.2 - t1, x))).unwrap();
    let reference = skeleton_reference(&grid, &p, &g, &sigma).unwrap();
    let want = point_value(&grid.space, reference.terminal(), 0.0).unwrap();
    assert!(want > 1.05);
    let b = solve_controlled(&grid, &p, 0.05, &g, &sigma, 2000, 8, &point(0.0)).unwrap();
    let (m, se) = mean_stderr(&b.observable(0));
    assert!((m - want).abs() < 4.0 * se, "mean {m} ± {se} vs {want}");
    assert!(b.log_weights().iter().all(|w| w.is_finite()));
}

#[test]
fn fluctuations_vanish_with_eps() {
    let grid = build_grid(8.0, 128, 1.0, 10).unwrap();
    let p = HParams::new(0.3).unwrap();
    let sigma = SigmaSpec::smooth(1.0, 0.5, 1.0);
    let g = ControlPath::from_steps(&grid, &p, |_, _, t1| Field::from_fn(&grid.space, |x| gauss(1.2 - t1, x))).unwrap();
    let reference = skeleton_reference(&grid, &p, &g, &sigma).unwrap();
    let mut prev = f64::INFINITY;
    for eps in [0.1, 0.01, 0.001] {
        let b = solve_controlled(&grid, &p, eps, &g, &sigma, 64, 2, &BatchRequest { keep_paths: true, ..BatchRequest::default() }).unwrap();
        let mut d: Vec<f64> =
            b.runs.iter().map(|r| roughshe::norms::path_metric_dc(&grid.space, r.path.as_ref().unwrap(), &reference).unwrap()).collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = d[d.len() / 2];
        assert!(median < prev, "eps={eps}: median {median}");
        prev = median;
    }
}

#[test]
fn observables_agree_on_a_smooth_terminal_field() {
    let grid = build_grid(8.0, 256, 1.0, 4).unwrap();
    let f = Field::from_fn(&grid.space, |x| 1.0 + 0.5 * (-x * x).exp());
    let v = point_value(&grid.space, &f, 0.3).unwrap();
    assert!((v - (1.0 + 0.5 * (-0.09f64).exp())).abs() < 1e-12);
    let sup = Probe::new(&grid.space, Observable::SupDeviation).unwrap().eval_field(&grid.space, &f).unwrap();
    assert!((sup - 0.5).abs() < 1e-12);
    // ∫ (1 + ½e^{-y²}) p_w(y) dy = 1 + ½ (1 + 4w)^{-1/2}
    let w = 0.5;
    let avg = Probe::new(&grid.space, Observable::WeightedAverage { center: 0.0, width: w }).unwrap().eval_field(&grid.space, &f).unwrap();
    assert!((avg - (1.0 + 0.5 / (1.0 + 4.0 * w).sqrt())).abs() < 1e-9, "{avg}");
}

#[test]
fn invalid_inputs() {
    let grid = build_grid(8.0, 64, 1.0, 4).unwrap();
    let p = HParams::new(0.3).unwrap();
    assert!(solve_stochastic(&grid, &p, 0.0, &SigmaSpec::constant(1.0), 4, 1, &point(0.0)).is_err());
    assert!(SheSolver::new(&grid, &p, &SigmaSpec::constant(1.0), f64::NAN, None).is_err());
    assert!(point_value(&grid.space, &Field::zeros(64), 20.0).is_err());
}
