use proptest::prelude::*;
use roughshe::rough_space::*;
use roughshe::special::gamma;
use roughshe::{Field, HParams, MollifiedSpace, SpaceGrid};
use std::f64::consts::PI;

fn gauss(t: f64, x: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

/// `c1 ∫ e^{-aξ²} |ξ|^{1-2H} dξ = c1 Γ(1-H) a^{H-1}`.
fn gaussian_pair(h: f64, a: f64) -> f64 {
    let c1 = gamma(2.0 * h + 1.0) * (PI * h).sin() / (2.0 * PI);
    c1 * gamma(1.0 - h) * a.powf(h - 1.0)
}

#[test]
fn spectral_density_values() {
    let p = HParams::new(0.3).unwrap();
    let c1 = gamma(1.6) * (0.3 * PI).sin() / (2.0 * PI);
    assert!((p.c1 - c1).abs() < 1e-15);
    assert_eq!(spectral_density(0.0, &p), 0.0);
    assert!((spectral_density(1.0, &p) - c1).abs() < 1e-15);
    assert!((spectral_density(-2.0, &p) - c1 * 2f64.powf(0.4)).abs() < 1e-14);
}

#[test]
fn heat_kernel_norms_in_fourier_form() {
    let grid = SpaceGrid::new(32.0, 4096).unwrap();
    for h in [0.3, 0.4] {
        let p = HParams::new(h).unwrap();
        let f = |t: f64| Field::from_fn(&grid, move |x| gauss(t, x));
        for (s, t) in [(1.0, 1.0), (0.5, 2.0)] {
            let v = inner_product_fourier(&grid, &f(s), &f(t), &MollifiedSpace::unmollified(), &p).unwrap();
            let want = gaussian_pair(h, s + t);
            assert!((v / want - 1.0).abs() < 2e-3, "H={h} s={s} t={t}: {v} vs {want}");
        }
        for eps in [0.01, 0.5] {
            let space = MollifiedSpace::level(eps).unwrap();
            let v = inner_product_fourier(&grid, &f(1.0), &f(1.0), &space, &p).unwrap();
            let want = gaussian_pair(h, 2.0 + eps);
            assert!((v / want - 1.0).abs() < 2e-3, "H={h} eps={eps}");
        }
    }
}

#[test]
fn increment_form_agrees_with_fourier_form() {
    let grid = SpaceGrid::new(32.0, 4096).unwrap();
    let p = HParams::new(0.35).unwrap();
    let p1 = Field::from_fn(&grid, |x| gauss(1.0, x));
    let p2 = Field::from_fn(&grid, |x| gauss(2.0, x - 0.5));
    let space = MollifiedSpace::unmollified();
    for (a, b) in [(&p1, &p1), (&p1, &p2), (&p2, &p2)] {
        let g = inner_product_gagliardo(&grid, a, b, &p).unwrap();
        let f = inner_product_fourier(&grid, a, b, &space, &p).unwrap();
        assert!((g / f - 1.0).abs() < 0.02, "{g} vs {f}");
    }
}

#[test]
fn mollifier_kernel() {
    let grid = SpaceGrid::new(8.0, 256).unwrap();
    let h = 0.3;
    let p = HParams::new(h).unwrap();
    let mut prev_max = f64::INFINITY;
    for eps in [0.05, 0.1, 0.5] {
        let f = build_mollifier(eps, &grid, &p).unwrap().f_eps.unwrap();
        let v = f.values();
        let j0 = grid.nearest_index(0.0).unwrap();
        let want = gamma(1.0 - h) * eps.powf(h - 1.0) / (2.0 * PI);
        assert!((v[j0] / want - 1.0).abs() < 1e-6, "eps={eps}: {} vs {want}", v[j0]);
        for j in 1..grid.n_points() / 2 {
            assert!((v[j0 + j] - v[j0 - j]).abs() <= 1e-9 * want);
        }
        let m = f.max_abs();
        assert!(m < prev_max);
        prev_max = m;
    }
}

#[test]
fn norms_decrease_with_mollification() {
    let grid = SpaceGrid::new(16.0, 512).unwrap();
    let p = HParams::new(0.3).unwrap();
    let phi = Field::from_fn(&grid, |x| (-x * x).exp() * (3.0 * x).cos());
    let mut prev = f64::INFINITY;
    for eps in [0.0, 0.001, 0.01, 0.1, 1.0] {
        let v = SpectralForm::new(&grid, &p, eps).norm_sq(&grid, &phi).unwrap();
        assert!(v < prev, "eps={eps}");
        assert!(v > 0.0);
        prev = v;
    }
}

#[test]
fn zero_is_orthogonal_to_everything() {
    let grid = SpaceGrid::new(8.0, 128).unwrap();
    let p = HParams::new(0.3).unwrap();
    let phi = Field::from_fn(&grid, |x| gauss(0.3, x));
    let zero = Field::zeros(128);
    assert_eq!(inner_product_fourier(&grid, &phi, &zero, &MollifiedSpace::unmollified(), &p).unwrap(), 0.0);
}

#[test]
fn suite_forms_agree() {
    let grid = SpaceGrid::new(32.0, 4096).unwrap();
    let p = HParams::new(0.4).unwrap();
    let suite = smooth_suite(&grid);
    assert_eq!(suite.len(), 5);
    for (name, f) in &suite {
        let g = inner_product_gagliardo(&grid, f, f, &p).unwrap();
        let s = inner_product_fourier(&grid, f, f, &MollifiedSpace::unmollified(), &p).unwrap();
        assert!((g / s - 1.0).abs() < 0.01, "{name}: {g} vs {s}");
    }
}

#[test]
fn hurst_range_is_open() {
    for h in [0.25, 0.5, 0.1, f64::NAN] {
        assert!(HParams::new(h).is_err(), "H={h}");
    }
    assert!(MollifiedSpace::level(-0.1).is_err());
}

fn bump(grid: &SpaceGrid, c: f64, w: f64, a: f64) -> Field {
    Field::from_fn(grid, move |x| a * (-(x - c) * (x - c) / (2.0 * w * w)).exp())
}

fn arb_bump() -> impl Strategy<Value = (f64, f64, f64)> {
    (-3.0f64..3.0, 0.3f64..2.0, -2.0f64..2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn form_is_symmetric_bilinear_and_bounded(
        a in arb_bump(), b in arb_bump(), c in arb_bump(),
        s in -3.0f64..3.0, eps in 0.0f64..0.5, h in 0.26f64..0.49,
    ) {
        let grid = SpaceGrid::new(16.0, 256).unwrap();
        let p = HParams::new(h).unwrap();
        let form = SpectralForm::new(&grid, &p, eps);
        let (fa, fb, fc) = (bump(&grid, a.0, a.1, a.2), bump(&grid, b.0, b.1, b.2), bump(&grid, c.0, c.1, c.2));
        let ab = form.inner(&grid, &fa, &fb).unwrap();
        let ba = form.inner(&grid, &fb, &fa).unwrap();
        let scale = form.norm_sq(&grid, &fa).unwrap() + form.norm_sq(&grid, &fb).unwrap()
            + form.norm_sq(&grid, &fc).unwrap() + 1e-300;
        prop_assert!((ab - ba).abs() <= 1e-12 * scale);

        let comb = fa.axpy(s, &fc).unwrap();
        let lhs = form.inner(&grid, &comb, &fb).unwrap();
        let rhs = ab + s * form.inner(&grid, &fc, &fb).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + s.abs()) * scale);

        let na = form.norm_sq(&grid, &fa).unwrap();
        let nb = form.norm_sq(&grid, &fb).unwrap();
        prop_assert!(na >= 0.0 && nb >= 0.0);
        prop_assert!(ab * ab <= na * nb * (1.0 + 1e-12) + 1e-300);
    }
}
