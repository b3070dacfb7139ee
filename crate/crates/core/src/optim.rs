//! Small dense optimization kernels: BFGS with Armijo backtracking and a
//! Cholesky solve for symmetric positive semi-definite systems.

use alloc::vec;
use alloc::vec::Vec;

/// Stopping rules for [`bfgs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the gradient norm falls below this value.
    pub grad_tol: f64,
    /// Stop (flagged) after this many iterations without a decrease.
    pub stall_iters: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 200, grad_tol: 1e-10, stall_iters: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stalled: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` starting from `x0`, given `f` alone (used by the line
/// search) and `fg(x) -> (f(x), ∇f(x))`.
pub fn bfgs(
    mut f_only: impl FnMut(&[f64]) -> f64,
    mut fg: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: &[f64],
    opts: BfgsOptions,
) -> BfgsResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg(&x);
    let mut evals = 1;
    let mut hinv: Vec<f64> = vec![0.0; n * n];
    for i in 0..n {
        hinv[i * n + i] = 1.0;
    }
    let mut since_decrease = 0;
    let mut iterations = 0;
    let mut stalled = false;
    while iterations < opts.max_iter {
        let gn = libm::sqrt(dot(&g, &g));
        if gn <= opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // Reset to steepest descent when the curvature model goes bad.
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            d = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let fnew = f_only(&xn);
            evals += 1;
            if fnew.is_finite() && fnew <= f + 1e-4 * alpha * slope {
                let (fnew, gnew) = fg(&xn);
                evals += 1;
                accepted = Some((xn, fnew, gnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            stalled = true;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 && sy > 1e-12 * libm::sqrt(dot(&s, &s) * dot(&y, &y)) {
            let hy: Vec<f64> = (0..n).map(|i| dot(&hinv[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            let r = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += (1.0 + yhy * r) * r * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        if fnew < f - 1e-15 * f.abs() {
            since_decrease = 0;
        } else {
            since_decrease += 1;
            if since_decrease >= opts.stall_iters {
                stalled = true;
            }
        }
        x = xn;
        f = fnew;
        g = gnew;
        if stalled {
            break;
        }
    }
    let grad_norm = libm::sqrt(dot(&g, &g));
    BfgsResult { x, f, grad_norm, iterations, evaluations: evals, stalled }
}

/// Solves `A x = b` for symmetric positive semi-definite `A` (row-major),
/// with a relative diagonal shift of `1e-12` for rank-deficient matrices.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let shift = 1e-12 * (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j] + if i == j { shift } else { 0.0 };
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = if i == j { libm::sqrt(s.max(1e-300)) } else { s / l[j * n + j] };
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i * n + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let r = bfgs(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            |x| {
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
                (f, g)
            },
            &[-1.2, 1.0],
            BfgsOptions { max_iter: 500, ..Default::default() },
        );
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn cholesky_solves_spd() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = cholesky_solve(&a, &[1.0, 2.0]);
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-9 && (x[0] + 3.0 * x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_in_few_steps() {
        let r = bfgs(
            |x| 3.0 * x[0] * x[0] + x[1] * x[1] + x[0] * x[1] - x[0],
            |x| {
                let f = 3.0 * x[0] * x[0] + x[1] * x[1] + x[0] * x[1] - x[0];
                (f, vec![6.0 * x[0] + x[1] - 1.0, 2.0 * x[1] + x[0]])
            },
            &[0.0, 0.0],
            BfgsOptions::default(),
        );
        assert!(r.grad_norm < 1e-9);
        assert!(r.iterations < 20);
    }
}
