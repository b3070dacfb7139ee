//! Weighted norms, fractional increment seminorms, the path metric `d_C` and
//! the space-time modulus of continuity.

use alloc::format;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use serde::{Deserialize, Serialize};

use crate::discretization::{Field, Path, SpaceGrid};
use crate::error::{shape_check, Error, Result};
use crate::quadrature::{adaptive_to_infinity, log_grid, refine};
use crate::special::gamma;

/// Normalizing constant `c_H = Γ(1-H) / (√π Γ(1/2-H))` of the weight.
pub fn lambda_constant(hurst: f64) -> f64 {
    gamma(1.0 - hurst) / (libm::sqrt(core::f64::consts::PI) * gamma(0.5 - hurst))
}

/// `λ(x) = c_H (1 + x²)^{H-1}`, normalized to unit mass on the real line.
pub fn weight_lambda(x: f64, hurst: f64) -> f64 {
    lambda_constant(hurst) * libm::pow(1.0 + x * x, hurst - 1.0)
}

/// Mass of `λ` outside `[-L, L]`.
pub fn lambda_tail_mass(half_width: f64, hurst: f64) -> Result<f64> {
    let one_side = adaptive_to_infinity(|x| weight_lambda(x, hurst), half_width, 1e-14, 1e-10)?;
    Ok(2.0 * one_side)
}

fn check_p(p: f64) -> Result<()> {
    if p >= 2.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("norm exponent must satisfy 2 <= p < inf, got {p}")))
    }
}

/// Quadrature weights `dx·λ(x_j)`.
pub(crate) fn lambda_weights(grid: &SpaceGrid, hurst: f64) -> Vec<f64> {
    let c = lambda_constant(hurst);
    (0..grid.n_points())
        .map(|j| {
            let x = grid.x(j);
            grid.dx() * c * libm::pow(1.0 + x * x, hurst - 1.0)
        })
        .collect()
}

/// `(∫ |v|^p λ dx)^{1/p}` on the grid.
pub fn lp_lambda_norm(grid: &SpaceGrid, v: &Field, p: f64, hurst: f64) -> Result<f64> {
    lp_lambda_norm_mc(grid, core::slice::from_ref(v), p, hurst)
}

/// `(∫ E|v(x)|^p λ(x) dx)^{1/p}` with the expectation replaced by the
/// average over `samples`.
pub fn lp_lambda_norm_mc(grid: &SpaceGrid, samples: &[Field], p: f64, hurst: f64) -> Result<f64> {
    check_p(p)?;
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    let w = lambda_weights(grid, hurst);
    let mut acc = 0.0;
    for s in samples {
        grid.check(s)?;
        acc += s.values().iter().zip(&w).map(|(v, w)| w * libm::pow(v.abs(), p)).sum::<f64>();
    }
    Ok(libm::pow(acc / samples.len() as f64, 1.0 / p))
}

/// Periodic shift `v(· + h)` by cubic interpolation.
fn shifted(grid: &SpaceGrid, v: &Field, h: f64) -> Vec<f64> {
    (0..grid.n_points()).map(|j| grid.interpolate(v, grid.x(j) + h)).collect()
}

/// `∫_{|h|≤L} F(h) |h|^{2H-2} dh` plus the tail `|h| > L` with `F(±L)`,
/// where `F` is evaluated pointwise. Near zero `F(h) ≈ F(±dx)h²/dx²`.
fn increment_integral(grid: &SpaceGrid, hurst: f64, f: impl Fn(f64) -> f64, rel_tol: f64) -> Result<f64> {
    let a = 2.0 * hurst - 2.0;
    let (d, l) = (grid.dx(), grid.half_width());
    let fd = f(d) + f(-d);
    let fl = f(l) + f(-l);
    let ends = fd / (d * d) * libm::pow(d, a + 3.0) / (a + 3.0) + fl * libm::pow(l, a + 1.0) / -(a + 1.0);
    let eval = |m: usize| {
        let (hs, ws) = log_grid(d, l, m);
        hs.iter().zip(&ws).map(|(&h, &w)| w * libm::pow(h, a) * (f(h) + f(-h))).sum::<f64>() + ends
    };
    refine(eval, |m| log_grid(d, l, m).0.len(), 8, rel_tol, 1 << 16).map(|r| r.0)
}

/// `N*_{1/2-H,p} v = (∫ ‖v(·) - v(·+h)‖²_{L^p_λ} |h|^{2H-2} dh)^{1/2}`, the
/// `L^p_λ` norm averaged over `samples` (one sample for a deterministic slice).
pub fn n_star_norm(grid: &SpaceGrid, samples: &[Field], p: f64, hurst: f64) -> Result<f64> {
    check_p(p)?;
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    for s in samples {
        grid.check(s)?;
    }
    let w = lambda_weights(grid, hurst);
    let inc = |h: f64| {
        let mut acc = 0.0;
        for s in samples {
            let sh = shifted(grid, s, h);
            acc += s.values().iter().zip(&sh).zip(&w).map(|((a, b), w)| w * libm::pow((a - b).abs(), p)).sum::<f64>();
        }
        libm::pow(acc / samples.len() as f64, 2.0 / p)
    };
    Ok(libm::sqrt(increment_integral(grid, hurst, inc, 5e-3)?.max(0.0)))
}

/// `N_{1/2-H} f(x) = (∫ |f(x+h) - f(x)|² |h|^{2H-2} dh)^{1/2}` with periodic
/// interpolation of `f`; `|h| > L` uses the values at `±L`.
pub fn pointwise_n_norm(grid: &SpaceGrid, f: &Field, x: f64, hurst: f64) -> Result<f64> {
    grid.check(f)?;
    let fx = grid.interpolate(f, x);
    let inc = |h: f64| (grid.interpolate(f, x + h) - fx).powi(2);
    Ok(libm::sqrt(increment_integral(grid, hurst, inc, 5e-3)?.max(0.0)))
}

/// Components of the `Z^p_{λ,T}` norm over a set of time slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormReport {
    /// `sup_t ‖v(t)‖_{L^p_λ}`.
    pub lp_lambda: f64,
    /// `sup_t N*_{1/2-H,p} v(t)`.
    pub n_star: f64,
    pub z_norm: f64,
}

/// `Z^p_{λ,T}` norm of a batch of paths (deterministic when one path), over
/// the time indices `slices`.
pub fn z_norm(grid: &SpaceGrid, paths: &[Path], slices: &[usize], p: f64, hurst: f64) -> Result<WeightedNormReport> {
    if paths.is_empty() {
        return Err(Error::Domain("no paths".into()));
    }
    let mut lp = 0.0f64;
    let mut ns = 0.0f64;
    for &k in slices {
        let fields: Vec<Field> = paths
            .iter()
            .map(|pth| pth.fields.get(k).cloned().ok_or_else(|| Error::Domain(format!("slice {k} out of range"))))
            .collect::<Result<_>>()?;
        lp = lp.max(lp_lambda_norm_mc(grid, &fields, p, hurst)?);
        ns = ns.max(n_star_norm(grid, &fields, p, hurst)?);
    }
    Ok(WeightedNormReport { lp_lambda: lp, n_star: ns, z_norm: lp + ns })
}

fn check_paths(grid: &SpaceGrid, u: &Path, v: &Path) -> Result<()> {
    shape_check(u.len(), v.len())?;
    for (a, b) in u.fields.iter().zip(&v.fields) {
        grid.check(a)?;
        grid.check(b)?;
    }
    Ok(())
}

/// `d_C(u,v) = Σ_{n=1}^{⌈L⌉} 2^{-n} (max_{t, |x|≤n} |u-v| ∧ 1)` over grid points.
pub fn path_metric_dc(grid: &SpaceGrid, u: &Path, v: &Path) -> Result<f64> {
    check_paths(grid, u, v)?;
    let n_max = libm::ceil(grid.half_width()) as usize;
    let mut sup = alloc::vec![0.0f64; n_max + 1];
    for (a, b) in u.fields.iter().zip(&v.fields) {
        for (j, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
            let ax = grid.x(j).abs();
            let d = (x - y).abs();
            let first = libm::ceil(ax).max(1.0) as usize;
            if first <= n_max && d > sup[first] {
                sup[first] = d;
            }
        }
    }
    let mut total = 0.0;
    let mut running = 0.0f64;
    for (n, s) in sup.iter().enumerate().skip(1) {
        running = running.max(*s);
        total += libm::ldexp(1.0, -(n as i32)) * running.min(1.0);
    }
    Ok(total)
}

/// `max |u(t,x) - u(s,y)|` over grid pairs in `[0,T]×[-R,R]` with
/// `|t-s| + |x-y| ≤ θ`.
pub fn modulus_of_continuity(grid: &SpaceGrid, u: &Path, radius: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain("θ must be positive".into()));
    }
    if radius > grid.half_width() {
        return Err(Error::Domain(format!("R = {radius} exceeds the half width {}", grid.half_width())));
    }
    for f in &u.fields {
        grid.check(f)?;
    }
    let idx: Vec<usize> = (0..grid.n_points()).filter(|&j| grid.x(j).abs() <= radius + 1e-12).collect();
    let dx = grid.dx();
    let mut best = 0.0f64;
    for (i, fi) in u.fields.iter().enumerate() {
        for (k, fk) in u.fields.iter().enumerate().skip(i) {
            let dt = (u.times[k] - u.times[i]).abs();
            if dt > theta + 1e-12 {
                continue;
            }
            let max_shift = libm::floor((theta - dt) / dx + 1e-9) as isize;
            for s in -max_shift..=max_shift {
                for &j in &idx {
                    let jj = j as isize + s;
                    if jj < 0 || jj as usize >= grid.n_points() || grid.x(jj as usize).abs() > radius + 1e-12 {
                        continue;
                    }
                    let d = (fi.values()[j] - fk.values()[jj as usize]).abs();
                    best = best.max(d);
                }
            }
        }
    }
    Ok(best)
}
