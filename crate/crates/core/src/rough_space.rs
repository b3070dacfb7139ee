//! The Cameron–Martin space `H` of the noise and its Gaussian mollifications
//! `H_ε`.
//!
//! Fourier convention: `Ff(ξ) = ∫ e^{-iξx} f(x) dx`. With it,
//! `⟨φ,ψ⟩_{H_ε} = c1 ∫ Fφ(ξ) conj(Fψ(ξ)) e^{-εξ²} |ξ|^{1-2H} dξ` and the
//! noise has covariance `E[W(t,x)W(t,y)] = t(|x|^{2H}+|y|^{2H}-|x-y|^{2H})/2`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::{Field, SpaceGrid};
use crate::error::{shape_check, Error, Result};
use crate::fft::Fft;
use crate::quadrature::{adaptive, adaptive_to_infinity, log_grid};
use crate::special::gamma;

/// Rejects Hurst parameters outside the open interval `(1/4, 1/2)`.
pub fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.25 && hurst < 0.5 {
        Ok(())
    } else {
        Err(Error::Config("Hurst parameter must lie in (1/4, 1/2)".into()))
    }
}

/// Hurst parameter with its derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HParams {
    pub hurst: f64,
    /// `Γ(2H+1) sin(πH) / 2π`, the spectral density constant.
    pub c1: f64,
    /// The increment-form constant as written in the source formula:
    /// `(1/2-H)^{1/2} H^{1/2} Γ(H+1/2)^{-1} (∫_0^∞[(1+t)^{H-1/2}-t^{H-1/2}]²dt + 1/2H)^{1/2}`.
    pub c2: f64,
    /// Cached inner integral of `c2`.
    pub c2_integral: f64,
    /// Constant that makes the increment form equal the Fourier form under
    /// the convention above, `H(1-2H)/2`.
    pub increment_constant: f64,
}

impl HParams {
    pub fn new(hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let c1 = gamma(2.0 * hurst + 1.0) * libm::sin(PI * hurst) / (2.0 * PI);
        let c2_integral = c2_inner_integral(hurst)?;
        let c2 = libm::sqrt(0.5 - hurst) * libm::sqrt(hurst) / gamma(hurst + 0.5) * libm::sqrt(c2_integral + 1.0 / (2.0 * hurst));
        Ok(Self { hurst, c1, c2, c2_integral, increment_constant: hurst * (1.0 - 2.0 * hurst) / 2.0 })
    }

    /// Exponent `1-2H` of the spectral density.
    pub fn alpha(&self) -> f64 {
        1.0 - 2.0 * self.hurst
    }

    /// `‖p_t‖²_H = c1 Γ(1-H) (2t)^{H-1}`.
    pub fn heat_kernel_norm_sq(&self, t: f64) -> f64 {
        self.c1 * gamma(1.0 - self.hurst) * libm::pow(2.0 * t, self.hurst - 1.0)
    }

    /// `V(T) = ∫_0^T ‖p_s‖²_H ds = c1 Γ(1-H) 2^{H-1} T^H / H`.
    pub fn variance_integral(&self, horizon: f64) -> f64 {
        let h = self.hurst;
        self.c1 * gamma(1.0 - h) * libm::pow(2.0, h - 1.0) * libm::pow(horizon, h) / h
    }
}

/// `∫_0^∞ [(1+t)^{H-1/2} - t^{H-1/2}]² dt`.
///
/// On `[0,1]` the substitution `t = u^{1/2H}` removes the `t^{2H-1}`
/// endpoint singularity; on `[1,∞)` the map to a finite interval makes the
/// `t^{2H-3}` decay a regular endpoint.
fn c2_inner_integral(hurst: f64) -> Result<f64> {
    let b = hurst - 0.5;
    let g = |t: f64| {
        let v = libm::pow(1.0 + t, b) - libm::pow(t, b);
        v * v
    };
    let k = 1.0 / (2.0 * hurst);
    let head = adaptive(
        |u| {
            if u == 0.0 {
                // Limit of k·u^{k-1}·g(u^k) as u → 0.
                return k;
            }
            let t = libm::pow(u, k);
            k * libm::pow(u, k - 1.0) * g(t)
        },
        0.0,
        1.0,
        1e-14,
        1e-13,
    )?;
    let tail = adaptive_to_infinity(g, 1.0, 1e-15, 1e-13)?;
    Ok(head + tail)
}

/// Spectral density `c1 |ξ|^{1-2H}` of the noise.
pub fn spectral_density(xi: f64, params: &HParams) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    params.c1 * libm::pow(xi.abs(), params.alpha())
}

/// Mollification level with the sampled kernel `f_ε` when `ε > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifiedSpace {
    pub eps: f64,
    pub f_eps: Option<Field>,
}

impl MollifiedSpace {
    /// The space `H` itself.
    pub fn unmollified() -> Self {
        Self { eps: 0.0, f_eps: None }
    }

    /// Mollification level without sampling the kernel.
    pub fn level(eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::Domain(format!("mollification level must be non-negative, got {eps}")));
        }
        Ok(Self { eps, f_eps: None })
    }
}

/// `f_ε(x) = (1/2π) ∫ e^{iξx} e^{-εξ²} |ξ|^{1-2H} dξ` sampled on the grid by
/// adaptive quadrature.
pub fn build_mollifier(eps: f64, grid: &SpaceGrid, params: &HParams) -> Result<MollifiedSpace> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("mollifier requires eps > 0, got {eps}")));
    }
    let a = params.alpha();
    let xi_max = libm::sqrt(46.0 / eps);
    let eval = |x: f64| -> Result<f64> {
        let v = adaptive(|xi| libm::exp(-eps * xi * xi) * libm::pow(xi, a) * libm::cos(xi * x), 0.0, xi_max, 1e-13, 1e-11)?;
        Ok(v / PI)
    };
    let n = grid.n_points();
    let mut values = vec![0.0; n];
    // x_j = -L + j dx is symmetric about j = n/2; compute one half and mirror.
    for (j, v) in values.iter_mut().enumerate().skip(n / 2) {
        *v = eval(grid.x(j))?;
    }
    values[0] = eval(grid.x(0))?;
    for j in 1..n / 2 {
        values[j] = values[n - j];
    }
    Ok(MollifiedSpace { eps, f_eps: Some(Field::new(values)?) })
}

/// Per-mode weights `c1 ∫_cell |ξ|^{1-2H} dξ · e^{-εξ_k²}` of the
/// frequency-lattice quadrature of the `H_ε` inner product.
#[derive(Debug, Clone)]
pub struct SpectralForm {
    weights: Vec<f64>,
    dx: f64,
}

impl SpectralForm {
    pub fn new(grid: &SpaceGrid, params: &HParams, eps: f64) -> Self {
        let cell = grid.cell_weights(params.alpha());
        let weights = cell.iter().zip(grid.freqs()).map(|(w, xi)| params.c1 * w * libm::exp(-eps * xi * xi)).collect();
        Self { weights, dx: grid.dx() }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Inner product from raw DFTs (see [`SpaceGrid::forward`]).
    pub fn inner_spec(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        let s: f64 = self.weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x.re * y.re + x.im * y.im)).sum();
        s * self.dx * self.dx
    }

    pub fn inner(&self, grid: &SpaceGrid, phi: &Field, psi: &Field) -> Result<f64> {
        let a = grid.forward(phi)?;
        let b = grid.forward(psi)?;
        Ok(self.inner_spec(&a, &b))
    }

    pub fn norm_sq(&self, grid: &SpaceGrid, phi: &Field) -> Result<f64> {
        let a = grid.forward(phi)?;
        Ok(self.inner_spec(&a, &a))
    }
}

/// `⟨φ,ψ⟩_{H_ε}` in Fourier form, by frequency-lattice quadrature.
pub fn inner_product_fourier(grid: &SpaceGrid, phi: &Field, psi: &Field, space: &MollifiedSpace, params: &HParams) -> Result<f64> {
    grid.check(phi)?;
    grid.check(psi)?;
    SpectralForm::new(grid, params, space.eps).inner(grid, phi, psi)
}

/// Linear (non-periodic) cross-correlation `C(m) = dx Σ_j φ_{j+m} ψ_j` for
/// lags `m = 0..n-1`, computed with a zero-padded transform.
pub(crate) fn linear_correlation(dx: f64, phi: &[f64], psi: &[f64]) -> Vec<f64> {
    let n = phi.len();
    let fft = Fft::new(2 * n);
    let mut a = vec![Complex64::new(0.0, 0.0); 2 * n];
    let mut b = vec![Complex64::new(0.0, 0.0); 2 * n];
    for j in 0..n {
        a[j].re = phi[j];
        b[j].re = psi[j];
    }
    fft.forward(&mut a);
    fft.forward(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    fft.inverse(&mut a);
    a[..n].iter().map(|z| z.re * dx).collect()
}

/// `J(y) = ∫[φ(x+y)-φ(x)][ψ(x+y)-ψ(x)]dx` on lattice lags `y = m·dx`.
pub(crate) fn increment_products(dx: f64, phi: &[f64], psi: &[f64]) -> Vec<f64> {
    let c_pp = linear_correlation(dx, phi, psi);
    let c_qp = linear_correlation(dx, psi, phi);
    let l2 = c_pp[0];
    c_pp.iter().zip(&c_qp).map(|(a, b)| 2.0 * l2 - a - b).collect()
}

/// Cubic interpolation of a lag sequence at fractional lag `s`, even
/// extension for negative lags.
pub(crate) fn lag_interp(v: &[f64], s: f64) -> f64 {
    let n = v.len() as isize;
    let j = libm::floor(s) as isize;
    let r = s - j as f64;
    let at = |i: isize| {
        let i = i.abs();
        if i >= n {
            v[(n - 1) as usize]
        } else {
            v[i as usize]
        }
    };
    let (fm, f0, f1, f2) = (at(j - 1), at(j), at(j + 1), at(j + 2));
    -r * (r - 1.0) * (r - 2.0) / 6.0 * fm + (r + 1.0) * (r - 1.0) * (r - 2.0) / 2.0 * f0 - (r + 1.0) * r * (r - 2.0) / 2.0 * f1
        + (r + 1.0) * r * (r - 1.0) / 6.0 * f2
}

/// `∫_ℝ J(y) |y|^{2H-2} dy` for an even lag profile `J` sampled at `y = m·dx`,
/// `m = 0..n-1`, with `J(y) = J(∞)` beyond the sampled range.
///
/// Near zero `J(y) ≈ y² J(dx)/dx²` is integrated exactly; `[dx, (n-1)dx]` uses
/// a log-spaced trapezoid over cubic interpolants; the tail is analytic.
pub(crate) fn singular_lag_integral(dx: f64, j: &[f64], hurst: f64, per_efold: usize) -> f64 {
    let a = 2.0 * hurst - 2.0;
    let n = j.len();
    let y_max = (n - 1) as f64 * dx;
    let small = j[1] / (dx * dx) * libm::pow(dx, a + 3.0) / (a + 3.0);
    let tail = j[n - 1] * libm::pow(y_max, a + 1.0) / -(a + 1.0);
    let (ys, ws) = log_grid(dx, y_max, per_efold);
    let mid: f64 = ys.iter().zip(&ws).map(|(&y, &w)| w * libm::pow(y, a) * lag_interp(j, y / dx)).sum();
    2.0 * (small + mid + tail)
}

/// `⟨φ,ψ⟩_H` in increment (Gagliardo) form,
/// `κ ∫∫ [φ(x+y)-φ(x)][ψ(x+y)-ψ(x)] |y|^{2H-2} dx dy` with `κ = H(1-2H)/2`.
///
/// Fields are treated as compactly supported in `[-L, L)` (they must decay
/// below 1e-10 at the boundary), so the lag integral is non-periodic.
pub fn inner_product_gagliardo(grid: &SpaceGrid, phi: &Field, psi: &Field, params: &HParams) -> Result<f64> {
    grid.check(phi)?;
    shape_check(phi.len(), psi.len())?;
    let j = increment_products(grid.dx(), phi.values(), psi.values());
    Ok(params.increment_constant * singular_lag_integral(grid.dx(), &j, params.hurst, 64))
}

/// Five smooth test fields: three Gaussians and two differences of
/// Gaussians, all wider than one unit. They decay below 1e-10 at the
/// boundary once `L ≥ 24`.
pub fn smooth_suite(grid: &SpaceGrid) -> Vec<(&'static str, Field)> {
    let gauss = |s: f64, c: f64| move |x: f64| libm::exp(-(x - c) * (x - c) / (2.0 * s * s));
    let (a, b, c) = (gauss(1.5, 0.0), gauss(2.0, 1.0), gauss(3.0, -1.0));
    let (d1, d2) = (gauss(1.5, 0.0), gauss(3.0, 0.0));
    let (e1, e2) = (gauss(2.0, 0.5), gauss(2.0, -0.5));
    vec![
        ("gauss_1.5", Field::from_fn(grid, a)),
        ("gauss_2_shift", Field::from_fn(grid, b)),
        ("gauss_3_shift", Field::from_fn(grid, c)),
        ("dog_1.5_3", Field::from_fn(grid, move |x| d1(x) - d2(x))),
        ("dog_shifted", Field::from_fn(grid, move |x| e1(x) - e2(x))),
    ]
}
