//! Heat kernel `p_t(x) = (4πt)^{-1/2} e^{-x²/4t}`, its increments, the heat
//! semigroup on the periodic grid, and quadratures of the singular kernel
//! integrals that control the solution theory.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use serde::{Deserialize, Serialize};

use crate::discretization::{Field, SpaceGrid};
use crate::error::{Error, Result};
use crate::norms::weight_lambda;
use crate::quadrature::{adaptive_to_infinity, log_grid, refine, trapezoid};
use crate::rough_space::check_hurst;

#[inline]
pub(crate) fn p(t: f64, x: f64) -> f64 {
    libm::exp(-x * x / (4.0 * t)) / libm::sqrt(4.0 * PI * t)
}

#[inline]
fn dp(t: f64, x: f64) -> f64 {
    -x / (2.0 * t) * p(t, x)
}

#[inline]
fn d2p(t: f64, x: f64) -> f64 {
    (x * x / (4.0 * t * t) - 1.0 / (2.0 * t)) * p(t, x)
}

#[inline]
fn d_inc(t: f64, x: f64, h: f64) -> f64 {
    p(t, x + h) - p(t, x)
}

#[inline]
fn box_inc(t: f64, x: f64, y: f64, h: f64) -> f64 {
    p(t, x + y + h) - p(t, x + y) - p(t, x + h) + p(t, x)
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("heat kernel time must be positive, got {t}")))
    }
}

/// Heat kernel `p_t(x)`.
pub fn eval_p(t: f64, x: f64) -> Result<f64> {
    check_time(t)?;
    Ok(p(t, x))
}

/// Spatial increment `D_t(x,h) = p_t(x+h) - p_t(x)`.
pub fn eval_d(t: f64, x: f64, h: f64) -> Result<f64> {
    check_time(t)?;
    if h == 0.0 {
        return Ok(0.0);
    }
    Ok(d_inc(t, x, h))
}

/// Rectangular increment `□_t(x,y,h) = p_t(x+y+h) - p_t(x+y) - p_t(x+h) + p_t(x)`.
pub fn eval_box(t: f64, x: f64, y: f64, h: f64) -> Result<f64> {
    check_time(t)?;
    if y == 0.0 || h == 0.0 {
        return Ok(0.0);
    }
    Ok(box_inc(t, x, y, h))
}

/// Spectral multiplier `e^{-tξ²}` of the heat semigroup on the grid lattice.
pub fn semigroup_multiplier(grid: &SpaceGrid, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("semigroup time must be non-negative, got {t}")));
    }
    Ok(grid.freqs().iter().map(|xi| libm::exp(-t * xi * xi)).collect())
}

/// Heat flow for time `t` on the periodic grid.
pub fn semigroup_apply(grid: &SpaceGrid, t: f64, f: &Field) -> Result<Field> {
    let m = semigroup_multiplier(grid, t)?;
    grid.check(f)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    grid.apply_multiplier(f, &m)
}

/// Result of a kernel identity quadrature at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelIntegralReport {
    pub t: f64,
    pub hurst: f64,
    pub value: f64,
    /// Power of `t` the integral is expected to follow.
    pub reference_exponent: f64,
    /// `log2(value(2t)/value(t))`.
    pub fitted_exponent: f64,
}

/// Quadrature layout shared by the singular integrals.
///
/// The weight `|h|^{2H-2}` is integrated analytically on `|h| ≤ δ` (first
/// order Taylor expansion of the increment) and beyond `h_max` (increment
/// replaced by its separated-bump limit); the middle range uses a log-spaced
/// trapezoid rule. The inner `x`-integrals are trapezoid sums over windows
/// around each Gaussian bump.
#[derive(Debug, Clone, Copy)]
struct Layout {
    a: f64,
    delta: f64,
    h_max: f64,
    step: f64,
    radius: f64,
}

impl Layout {
    fn new(t: f64, hurst: f64, h_max: f64) -> Self {
        let s = libm::sqrt(t);
        Self { a: 2.0 * hurst - 2.0, delta: s * libm::ldexp(1.0, -10), h_max, step: 0.5 * s, radius: 12.0 * s }
    }

    /// `∫_0^δ h^{2H} dh`.
    fn small(&self) -> f64 {
        libm::pow(self.delta, self.a + 3.0) / (self.a + 3.0)
    }

    /// `∫_{h_max}^∞ h^{2H-2} dh`.
    fn tail(&self) -> f64 {
        libm::pow(self.h_max, self.a + 1.0) / -(self.a + 1.0)
    }

    fn grid(&self, m: usize) -> (Vec<f64>, Vec<f64>) {
        let (x, w) = log_grid(self.delta, self.h_max, m);
        let w = x.iter().zip(w).map(|(&h, w)| w * libm::pow(h, self.a)).collect();
        (x, w)
    }

    /// Trapezoid integral of `f` over the union of windows around `centers`.
    fn bumps(&self, centers: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        let mut c: Vec<f64> = centers.to_vec();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut total = 0.0;
        let mut i = 0;
        while i < c.len() {
            let lo = c[i] - self.radius;
            let mut hi = c[i] + self.radius;
            let mut j = i + 1;
            while j < c.len() && c[j] - self.radius <= hi {
                hi = c[j] + self.radius;
                j += 1;
            }
            total += trapezoid(&f, lo, hi, self.step);
            i = j;
        }
        total
    }
}

const REL_TOL: f64 = 2e-3;
const MAX_POINTS: usize = 1 << 22;

fn d_identity_value(t: f64, hurst: f64) -> Result<f64> {
    let lay = Layout::new(t, hurst, 8.0 * libm::sqrt(t));
    let inner = |h: f64| lay.bumps(&[0.0, -h], |x| d_inc(t, x, h).powi(2));
    let p_sq = lay.bumps(&[0.0], |x| p(t, x).powi(2));
    let dp_sq = lay.bumps(&[0.0], |x| dp(t, x).powi(2));
    let ends = lay.small() * dp_sq + lay.tail() * 2.0 * p_sq;
    let eval = |m: usize| {
        let (x, w) = lay.grid(m);
        let mid: f64 = x.iter().zip(&w).map(|(&h, &wi)| wi * inner(h)).sum();
        2.0 * (mid + ends)
    };
    let nodes = |m: usize| lay.grid(m).0.len() * 100;
    refine(eval, nodes, 8, REL_TOL, MAX_POINTS).map(|r| r.0)
}

/// Overlap of the two inner bumps `p(x+y)`, `p(x+h)` on `y ≈ h` where either
/// lag exceeds `h_max`: `∫∫ 2 p_{2t}(y-h) (yh)^{2H-2} dy dh` over that part of
/// the positive quadrant. The separated-bump limits drop this term.
fn box_diagonal_band(t: f64, lay: &Layout) -> Result<f64> {
    let s = libm::sqrt(t);
    let reach = 7.5 * s;
    let mut err = None;
    let f = |u: f64| {
        let y0 = if u >= 0.0 { lay.h_max } else { lay.h_max + u };
        let inner = adaptive_to_infinity(|y| libm::pow(y * (y - u), lay.a), y0, 1e-16, 1e-10);
        match inner {
            Ok(v) => 2.0 * p(2.0 * t, u) * v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    };
    let v = trapezoid(f, -reach, reach, 0.05 * s);
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

fn box_identity_value(t: f64, hurst: f64) -> Result<f64> {
    let lay = Layout::new(t, hurst, 8.0 * libm::sqrt(t));
    let p_sq = lay.bumps(&[0.0], |x| p(t, x).powi(2));
    let dp_sq = lay.bumps(&[0.0], |x| dp(t, x).powi(2));
    let d2p_sq = lay.bumps(&[0.0], |x| d2p(t, x).powi(2));
    let k = |y: f64| lay.bumps(&[0.0, -y], |x| (dp(t, x + y) - dp(t, x)).powi(2));
    let jd = |y: f64| lay.bumps(&[0.0, -y], |x| d_inc(t, x, y).powi(2));
    let j2 = |y: f64, h: f64| lay.bumps(&[0.0, -y, -h, -y - h], |x| box_inc(t, x, y, h).powi(2));
    let (sm, tl) = (lay.small(), lay.tail());
    let band = box_diagonal_band(t, &lay)?;
    let eval = |m: usize| {
        let (x, w) = lay.grid(m);
        let n = x.len();
        let mut mm = 0.0;
        for i in 0..n {
            mm += w[i] * w[i] * j2(x[i], x[i]);
            for j in 0..i {
                mm += 2.0 * w[i] * w[j] * j2(x[i], x[j]);
            }
        }
        let sm_line: f64 = x.iter().zip(&w).map(|(&y, &wi)| wi * k(y)).sum();
        let tm_line: f64 = x.iter().zip(&w).map(|(&y, &wi)| wi * 2.0 * jd(y)).sum();
        let q = mm + 2.0 * sm * sm_line + sm * sm * d2p_sq + 2.0 * tl * tm_line + tl * tl * 4.0 * p_sq + 2.0 * sm * tl * 2.0 * dp_sq + band;
        4.0 * q
    };
    let cost = |m: usize| {
        let n = lay.grid(m).0.len();
        n * n * 100
    };
    refine(eval, cost, 4, REL_TOL, MAX_POINTS).map(|r| r.0)
}

fn identity_report(t: f64, hurst: f64, exponent: f64, f: fn(f64, f64) -> Result<f64>) -> Result<KernelIntegralReport> {
    check_time(t)?;
    check_hurst(hurst)?;
    let v1 = f(t, hurst)?;
    let v2 = f(2.0 * t, hurst)?;
    Ok(KernelIntegralReport { t, hurst, value: v1, reference_exponent: exponent, fitted_exponent: libm::log2(v2 / v1) })
}

/// `∫∫ |D_t(x,h)|² |h|^{2H-2} dh dx`, expected to scale like `t^{H-1}`.
pub fn kernel_identity_d(t: f64, hurst: f64) -> Result<KernelIntegralReport> {
    identity_report(t, hurst, hurst - 1.0, d_identity_value)
}

/// `∫∫∫ |□_t(x,y,h)|² |h|^{2H-2} |y|^{2H-2} dy dh dx`, expected to scale like
/// `t^{2H-3/2}`.
pub fn kernel_identity_box(t: f64, hurst: f64) -> Result<KernelIntegralReport> {
    identity_report(t, hurst, 2.0 * hurst - 1.5, box_identity_value)
}

/// Value of the increment identity without the ratio evaluation.
pub fn kernel_integral_d(t: f64, hurst: f64) -> Result<f64> {
    check_time(t)?;
    check_hurst(hurst)?;
    d_identity_value(t, hurst)
}

/// Value of the rectangular-increment identity without the ratio evaluation.
pub fn kernel_integral_box(t: f64, hurst: f64) -> Result<f64> {
    check_time(t)?;
    check_hurst(hurst)?;
    box_identity_value(t, hurst)
}

/// Least-squares slope of `ln value` against `ln t`.
pub fn fit_exponent(ts: &[f64], values: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let lx: Vec<f64> = ts.iter().map(|t| libm::log(*t)).collect();
    let ly: Vec<f64> = values.iter().map(|v| libm::log(*v)).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Left side, right-side shape and their ratio for one kernel bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRatio {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl BoundRatio {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, ratio: lhs / rhs }
    }
}

/// Pointwise and weighted kernel bounds at one `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub t: f64,
    pub x: f64,
    pub hurst: f64,
    /// `∫|D_t(x,h)|²|h|^{2H-2}dh` against `t^{H-3/2} ∧ |x|^{2H-2}/√t`.
    pub pointwise_d: BoundRatio,
    /// `∫∫|□_t(x,y,h)|²|h|^{2H-2}|y|^{2H-2}dydh` against `t^{2H-2} ∧ |x|^{2H-2}/t^{1-H}`.
    pub pointwise_box: BoundRatio,
    /// `∫∫|D_t(x,h)|²|h|^{2H-2}λ(z-x)dxdh` at `z = x` against `t^{H-1}λ(z)`.
    pub weighted_d: BoundRatio,
    /// `∫∫∫|□_t|²|h|^{2H-2}|y|^{2H-2}λ(z-x)` at `z = x` against `t^{2H-3/2}λ(z)`.
    pub weighted_box: BoundRatio,
}

/// `t`-power branch when `x = 0`, else the smaller of the two branches.
fn min_branch(t_branch: f64, x: f64, x_branch: impl Fn(f64) -> f64) -> f64 {
    if x == 0.0 {
        t_branch
    } else {
        t_branch.min(x_branch(x.abs()))
    }
}

fn pointwise_d(t: f64, x: f64, hurst: f64) -> Result<f64> {
    let lay = Layout::new(t, hurst, x.abs() + 12.0 * libm::sqrt(t));
    let px = p(t, x);
    let dpx = dp(t, x);
    let ends = 2.0 * lay.small() * dpx * dpx + 2.0 * lay.tail() * px * px;
    let eval = |m: usize| {
        let (hs, w) = lay.grid(m);
        let mid: f64 = hs.iter().zip(&w).map(|(&h, &wi)| wi * (d_inc(t, x, h).powi(2) + d_inc(t, x, -h).powi(2))).sum();
        mid + ends
    };
    refine(eval, |m| lay.grid(m).0.len(), 8, REL_TOL, MAX_POINTS).map(|r| r.0)
}

fn pointwise_box(t: f64, x: f64, hurst: f64) -> Result<f64> {
    let lay = Layout::new(t, hurst, x.abs() + 12.0 * libm::sqrt(t));
    let signs = [1.0, -1.0];
    let (sm, tl) = (2.0 * lay.small(), 2.0 * lay.tail());
    let (px, dpx, d2px) = (p(t, x), dp(t, x), d2p(t, x));
    let eval = |m: usize| {
        let (hs, w) = lay.grid(m);
        let mut mm = 0.0;
        for (i, &y) in hs.iter().enumerate() {
            for (j, &h) in hs.iter().enumerate() {
                let mut s = 0.0;
                for sy in signs {
                    for sh in signs {
                        s += box_inc(t, x, sy * y, sh * h).powi(2);
                    }
                }
                mm += w[i] * w[j] * s;
            }
        }
        let line = |g: &dyn Fn(f64) -> f64| -> f64 { hs.iter().zip(&w).map(|(&y, &wi)| wi * (g(y) + g(-y))).sum() };
        let sm_line = line(&|y| (dp(t, x + y) - dpx).powi(2));
        let tm_line = line(&|y| d_inc(t, x, y).powi(2));
        mm + 2.0 * sm * sm_line + sm * sm * d2px * d2px + 2.0 * tl * tm_line + tl * tl * px * px + 2.0 * sm * tl * dpx * dpx
    };
    let cost = |m: usize| lay.grid(m).0.len().pow(2) * 4;
    refine(eval, cost, 4, REL_TOL, MAX_POINTS).map(|r| r.0)
}

fn weighted_d(t: f64, z: f64, hurst: f64) -> Result<f64> {
    let h_max = 200.0 + z.abs() + 12.0 * libm::sqrt(t);
    let lay = Layout::new(t, hurst, h_max);
    let lam = |x: f64| weight_lambda(z - x, hurst);
    let inner = |h: f64| lay.bumps(&[0.0, -h], |x| d_inc(t, x, h).powi(2) * lam(x));
    let p_sq = lay.bumps(&[0.0], |x| p(t, x).powi(2) * lam(x));
    let p_sq_plain = lay.bumps(&[0.0], |x| p(t, x).powi(2));
    let dp_sq = lay.bumps(&[0.0], |x| dp(t, x).powi(2) * lam(x));
    let c_h = weight_lambda(0.0, hurst);
    // Far bump `p(x+h)` sees `λ(z+h) ≈ c_H|h|^{2H-2}`.
    let far = c_h * libm::pow(h_max, 2.0 * lay.a + 1.0) / -(2.0 * lay.a + 1.0) * p_sq_plain;
    let ends = 2.0 * lay.small() * dp_sq + 2.0 * lay.tail() * p_sq + 2.0 * far;
    let eval = |m: usize| {
        let (hs, w) = lay.grid(m);
        let mid: f64 = hs.iter().zip(&w).map(|(&h, &wi)| wi * (inner(h) + inner(-h))).sum();
        mid + ends
    };
    refine(eval, |m| lay.grid(m).0.len() * 200, 8, REL_TOL, MAX_POINTS).map(|r| r.0)
}

fn weighted_box(t: f64, z: f64, hurst: f64) -> Result<f64> {
    let h_max = 50.0 + z.abs() + 12.0 * libm::sqrt(t);
    let lay = Layout::new(t, hurst, h_max);
    let lam = |x: f64| weight_lambda(z - x, hurst);
    let signs = [1.0, -1.0];
    let (sm, tl) = (2.0 * lay.small(), 2.0 * lay.tail());
    let p_sq = lay.bumps(&[0.0], |x| p(t, x).powi(2) * lam(x));
    let dp_sq = lay.bumps(&[0.0], |x| dp(t, x).powi(2) * lam(x));
    let d2p_sq = lay.bumps(&[0.0], |x| d2p(t, x).powi(2) * lam(x));
    let eval = |m: usize| {
        let (hs, w) = lay.grid(m);
        let mut mm = 0.0;
        for (i, &y) in hs.iter().enumerate() {
            for (j, &h) in hs.iter().enumerate() {
                let mut s = 0.0;
                for sy in signs {
                    for sh in signs {
                        let (yy, hh) = (sy * y, sh * h);
                        s += lay.bumps(&[0.0, -yy, -hh, -yy - hh], |x| box_inc(t, x, yy, hh).powi(2) * lam(x));
                    }
                }
                mm += w[i] * w[j] * s;
            }
        }
        let line = |g: &dyn Fn(f64) -> f64| -> f64 { hs.iter().zip(&w).map(|(&y, &wi)| wi * (g(y) + g(-y))).sum() };
        let sm_line = line(&|y| lay.bumps(&[0.0, -y], |x| (dp(t, x + y) - dp(t, x)).powi(2) * lam(x)));
        let tm_line = line(&|y| lay.bumps(&[0.0, -y], |x| d_inc(t, x, y).powi(2) * lam(x)));
        mm + 2.0 * sm * sm_line + sm * sm * d2p_sq + 2.0 * tl * tm_line + tl * tl * p_sq + 2.0 * sm * tl * dp_sq
    };
    let cost = |m: usize| lay.grid(m).0.len().pow(2) * 400;
    refine(eval, cost, 2, 5e-3, MAX_POINTS * 64).map(|r| r.0)
}

/// Left side of the weighted increment bound at `(t, z)`.
pub fn weighted_d_integral(t: f64, z: f64, hurst: f64) -> Result<f64> {
    check_time(t)?;
    check_hurst(hurst)?;
    weighted_d(t, z, hurst)
}

/// Left side of the pointwise increment bound at `(t, x)`.
pub fn pointwise_d_integral(t: f64, x: f64, hurst: f64) -> Result<f64> {
    check_time(t)?;
    check_hurst(hurst)?;
    pointwise_d(t, x, hurst)
}

/// Left side of the pointwise rectangular bound at `(t, x)`.
pub fn pointwise_box_integral(t: f64, x: f64, hurst: f64) -> Result<f64> {
    check_time(t)?;
    check_hurst(hurst)?;
    pointwise_box(t, x, hurst)
}

/// Evaluates the four kernel bounds at `(t, x)` (with `z = x` for the
/// weighted ones).
pub fn kernel_bound_checks(t: f64, x: f64, hurst: f64) -> Result<KernelBoundReport> {
    check_time(t)?;
    check_hurst(hurst)?;
    let h = hurst;
    let sqt = libm::sqrt(t);
    let rhs_d = min_branch(libm::pow(t, h - 1.5), x, |ax| libm::pow(ax, 2.0 * h - 2.0) / sqt);
    let rhs_box = min_branch(libm::pow(t, 2.0 * h - 2.0), x, |ax| libm::pow(ax, 2.0 * h - 2.0) / libm::pow(t, 1.0 - h));
    let lam = weight_lambda(x, h);
    Ok(KernelBoundReport {
        t,
        x,
        hurst,
        pointwise_d: BoundRatio::new(pointwise_d(t, x, h)?, rhs_d),
        pointwise_box: BoundRatio::new(pointwise_box(t, x, h)?, rhs_box),
        weighted_d: BoundRatio::new(weighted_d(t, x, h)?, libm::pow(t, h - 1.0) * lam),
        weighted_box: BoundRatio::new(weighted_box(t, x, h)?, libm::pow(t, 2.0 * h - 1.5) * lam),
    })
}

/// Bound reports over a `(t, x)` sweep and the smallest constant that
/// dominates every ratio, per bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundSweep {
    pub reports: Vec<KernelBoundReport>,
    /// Max ratio for pointwise D, pointwise □, weighted D, weighted □.
    pub constants: [f64; 4],
}

pub fn kernel_bound_sweep(ts: &[f64], xs: &[f64], hurst: f64) -> Result<KernelBoundSweep> {
    let mut reports = Vec::new();
    let mut constants = [0.0f64; 4];
    for &t in ts {
        for &x in xs {
            let r = kernel_bound_checks(t, x, hurst)?;
            for (c, b) in constants.iter_mut().zip([r.pointwise_d, r.pointwise_box, r.weighted_d, r.weighted_box]) {
                if !b.ratio.is_finite() {
                    return Err(Error::Numerical(format!("non-finite bound ratio at t={t}, x={x}")));
                }
                *c = c.max(b.ratio);
            }
            reports.push(r);
        }
    }
    Ok(KernelBoundSweep { reports, constants })
}

/// `|p_{t+h}(x) - p_t(x)| / (h^γ t^{-γ} [p_{2(t+h)/γ}(x) + p_{2t/γ}(x)])`.
pub fn time_increment_ratio(t: f64, h: f64, x: f64, gamma: f64) -> Result<f64> {
    check_time(t)?;
    if !(h > 0.0) || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain("need h > 0 and γ in (0, 1)".into()));
    }
    let lhs = (p(t + h, x) - p(t, x)).abs();
    let rhs = libm::pow(h / t, gamma) * (p(2.0 * (t + h) / gamma, x) + p(2.0 * t / gamma, x));
    Ok(lhs / rhs)
}
