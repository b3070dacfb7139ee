//! One-dimensional quadrature building blocks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let d = h * XGK[i];
        let s = f(c - d) + f(c + d);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate falls below `max(abs_tol, rel_tol·|I|)`.
pub fn adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let (v, e) = gk15(&mut f, a, b);
    let mut parts: Vec<(f64, f64, f64, f64)> = vec![(a, b, v, e)];
    for _ in 0..4000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let (i, _) = parts.iter().enumerate().fold((0, -1.0), |(bi, be), (i, p)| if p.3 > be { (i, p.3) } else { (bi, be) });
        let (lo, hi, _, _) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    let total: f64 = parts.iter().map(|p| p.2).sum();
    let err: f64 = parts.iter().map(|p| p.3).sum();
    Err(Error::Numerical(format!("adaptive quadrature on [{a}, {b}] stopped at {total} with error estimate {err:e}")))
}

/// `∫_a^∞ f` over doubling panels `[a + w(2^j - 1), a + w(2^{j+1} - 1)]`,
/// each by [`adaptive`]. Once successive panel ratios settle (power-law or
/// faster decay) the remainder is summed as a geometric series.
pub fn adaptive_to_infinity(mut f: impl FnMut(f64) -> f64, a: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let mut lo = a;
    let mut width = a.abs().max(1.0);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    let mut prev_ratio: Option<f64> = None;
    for _ in 0..400 {
        let hi = lo + width;
        let v = adaptive(&mut f, lo, hi, 0.25 * abs_tol, rel_tol)?;
        total += v;
        if let Some(p) = prev {
            if v == 0.0 && p == 0.0 {
                return Ok(total);
            }
            let r = v / p;
            if (0.0..1.0).contains(&r) {
                let rest = v * r / (1.0 - r);
                let settled = prev_ratio.is_some_and(|q| (r - q).abs() <= 1e-3 * (1.0 - r));
                let tol = abs_tol.max(rel_tol * total.abs());
                if rest.abs() <= tol || (settled && (rest * 1e-3).abs() <= tol) {
                    return Ok(total + rest);
                }
            }
            prev_ratio = Some(r);
        }
        prev = Some(v);
        lo = hi;
        width *= 2.0;
    }
    Err(Error::Numerical(format!("tail integral from {a} did not settle; partial sum {total}")))
}

/// Trapezoid rule with uniform `step` covering `[lo, hi]` (step shrunk to
/// fit a whole number of panels).
pub fn trapezoid(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = libm::ceil((hi - lo) / step).max(1.0) as usize;
    let h = (hi - lo) / n as f64;
    let mut s = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        s += f(lo + i as f64 * h);
    }
    s * h
}

/// Geometric (log-spaced) grid on `[lo, hi]`, `per_efold` nodes per unit of
/// `ln h`, with the trapezoid weights of `∫ f(h) dh = ∫ f(e^s) e^s ds`.
pub fn log_grid(lo: f64, hi: f64, per_efold: usize) -> (Vec<f64>, Vec<f64>) {
    let span = libm::log(hi / lo);
    let n = libm::ceil(span * per_efold as f64).max(1.0) as usize;
    let ds = span / n as f64;
    let mut nodes = Vec::with_capacity(n + 1);
    let mut weights = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let h = lo * libm::exp(i as f64 * ds);
        let end = if i == 0 || i == n { 0.5 } else { 1.0 };
        nodes.push(h);
        weights.push(end * ds * h);
    }
    (nodes, weights)
}

/// `∫_lo^hi f` by the trapezoid rule on a log-spaced grid.
pub fn log_trapezoid(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, per_efold: usize) -> f64 {
    let (x, w) = log_grid(lo, hi, per_efold);
    x.iter().zip(&w).map(|(&h, &wi)| wi * f(h)).sum()
}

/// Repeats `eval(level)` with `level` doubling from `start` until two
/// successive values differ by less than `rel_tol`, or `cost(level)`
/// exceeds `max_cost`.
pub fn refine(
    mut eval: impl FnMut(usize) -> f64,
    cost: impl Fn(usize) -> usize,
    start: usize,
    rel_tol: f64,
    max_cost: usize,
) -> Result<(f64, usize)> {
    let mut level = start;
    let mut prev = eval(level);
    let mut history = vec![prev];
    loop {
        let next_level = level * 2;
        if cost(next_level) > max_cost {
            return Err(Error::Convergence { iterations: history.len(), residual: relative_change(&history), history });
        }
        let v = eval(next_level);
        history.push(v);
        if (v - prev).abs() <= rel_tol * v.abs() {
            return Ok((v, next_level));
        }
        prev = v;
        level = next_level;
    }
}

fn relative_change(h: &[f64]) -> f64 {
    match h {
        [.., a, b] => ((b - a) / b).abs(),
        _ => f64::NAN,
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = adaptive(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-7);
    }

    #[test]
    fn semi_infinite_gaussian() {
        let v = adaptive_to_infinity(|x: f64| (-x * x).exp(), 0.0, 1e-13, 1e-11).unwrap();
        assert!((v - core::f64::consts::PI.sqrt() / 2.0).abs() < 1e-10);
    }

    #[test]
    fn log_trapezoid_power() {
        let v = log_trapezoid(|h: f64| h.powf(-0.4), 1e-3, 10.0, 64);
        let exact = (10f64.powf(0.6) - 1e-3f64.powf(0.6)) / 0.6;
        assert!((v - exact).abs() < 1e-4 * exact);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((v - 2.0 / 11.0).abs() < 1e-14);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }
}
