//! Small statistics toolkit and the parallel map used by Monte Carlo loops.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use serde::{Deserialize, Serialize};

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
/// Output order always follows the index.
#[cfg(feature = "parallel")]
pub fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Sample mean and its standard error.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, libm::sqrt(var / n))
}

/// Sample mean and unbiased variance.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var)
}

/// Standard error of the unbiased sample variance, from the fourth central
/// moment.
pub fn variance_stderr(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let (m, var) = mean_var(v);
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    libm::sqrt(((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0))
}

/// Sample skewness and excess kurtosis.
pub fn skew_kurtosis(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (m3 / libm::pow(m2, 1.5), m4 / (m2 * m2) - 3.0)
}

/// Proportion with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub hits: usize,
    pub trials: usize,
    pub p_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson score interval at normal quantile `z`.
pub fn wilson(hits: usize, trials: usize, z: f64) -> Proportion {
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let den = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / den;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / den;
    Proportion { hits, trials, p_hat: p, lower: (center - half).max(0.0), upper: (center + half).min(1.0) }
}

/// One-sided Mann–Kendall test for a decreasing trend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub s: i64,
    pub z: f64,
    /// One-sided p-value for a decreasing trend.
    pub p_value: f64,
    pub decreasing: bool,
}

pub fn mann_kendall_decreasing(v: &[f64], level: f64) -> TrendTest {
    let n = v.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let d = v[j] - v[i];
            s += if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            };
        }
    }
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = if s > 0 {
        (s as f64 - 1.0) / libm::sqrt(var)
    } else if s < 0 {
        (s as f64 + 1.0) / libm::sqrt(var)
    } else {
        0.0
    };
    let p_value = 1.0 - crate::special::normal_sf(z);
    TrendTest { s, z, p_value, decreasing: p_value < level }
}

/// Ordinary least squares `y ≈ a + b x`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}
