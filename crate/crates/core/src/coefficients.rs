//! Diffusion coefficients `σ(t, x, u)` and numerical checks of the standing
//! regularity hypothesis on a finite sweep.
//!
//! The checks cover the derived inequalities only (linear growth, Lipschitz
//! continuity in `u`, bounded derivatives, the weighted Lipschitz bound on
//! `σ'_u`); continuity of the partial derivatives themselves is not
//! machine-checkable on a sweep.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::weight_lambda;

/// User-supplied coefficient `(t, x, u) ↦ σ`.
pub type SigmaFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Functional form of the coefficient.
#[derive(Clone)]
pub enum SigmaKind {
    /// `σ ≡ c`.
    Constant { c: f64 },
    /// `σ = a·u + b`.
    Affine { a: f64, b: f64 },
    /// `σ = offset + amplitude·tanh(u / scale)`: bounded, smooth, with bounded
    /// derivatives of every order.
    Smooth { offset: f64, amplitude: f64, scale: f64 },
    /// Arbitrary closure; `label` is carried into reports and manifests.
    Custom { label: String, f: SigmaFn },
}

impl fmt::Debug for SigmaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { c } => write!(f, "Constant {{ c: {c} }}"),
            Self::Affine { a, b } => write!(f, "Affine {{ a: {a}, b: {b} }}"),
            Self::Smooth { offset, amplitude, scale } => {
                write!(f, "Smooth {{ offset: {offset}, amplitude: {amplitude}, scale: {scale} }}")
            }
            Self::Custom { label, .. } => write!(f, "Custom {{ label: {label:?} }}"),
        }
    }
}

/// Constants declared for each condition of the hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    /// `|σ(t,x,u)| ≤ C(1+|u|)`.
    pub growth: f64,
    /// `|σ(t,x,u) - σ(t,x,v)| ≤ C|u-v|`.
    pub lipschitz: f64,
    /// `|σ'_u| ≤ C`.
    pub du: f64,
    /// `|σ'_x(t,x,0)| ≤ C`.
    pub dx_at_zero: f64,
    /// `|σ''_{xu}| ≤ C`.
    pub dxu: f64,
    /// `λ^{-1/p0}(x)|σ'_u(u1) - σ'_u(u2)| ≤ C|u1 - u2|`.
    pub weighted_du_lipschitz: f64,
    /// Exponent of the weighted condition; must exceed `6/(4H-1)`.
    pub p0: f64,
}

impl DeclaredConstants {
    /// The same constant `c` for every condition.
    pub fn uniform(c: f64, p0: f64) -> Self {
        Self { growth: c, lipschitz: c, du: c, dx_at_zero: c, dxu: c, weighted_du_lipschitz: c, p0 }
    }
}

/// Smallest admissible `p0` is strictly above this value.
pub fn p0_threshold(hurst: f64) -> f64 {
    6.0 / (4.0 * hurst - 1.0)
}

/// Coefficient with its declared hypothesis constants.
#[derive(Debug, Clone)]
pub struct SigmaSpec {
    pub kind: SigmaKind,
    pub constants: DeclaredConstants,
}

impl SigmaSpec {
    pub fn new(kind: SigmaKind, constants: DeclaredConstants) -> Self {
        Self { kind, constants }
    }

    /// `σ ≡ c` with constants `max(|c|, 1)` and `p0 = 601`, above the
    /// threshold `6/(4H-1)` for every `H ≥ 0.2525`.
    pub fn constant(c: f64) -> Self {
        Self::new(SigmaKind::Constant { c }, DeclaredConstants::uniform(c.abs().max(1.0), 601.0))
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Self::new(SigmaKind::Affine { a, b }, DeclaredConstants::uniform(a.abs().max(b.abs()).max(1.0), 601.0))
    }

    pub fn smooth(offset: f64, amplitude: f64, scale: f64) -> Self {
        let c = (offset.abs() + amplitude.abs()).max(amplitude.abs() / scale).max(1.0);
        Self::new(SigmaKind::Smooth { offset, amplitude, scale }, DeclaredConstants::uniform(c, 601.0))
    }

    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        constants: DeclaredConstants,
    ) -> Self {
        Self::new(SigmaKind::Custom { label: label.into(), f: Arc::new(f) }, constants)
    }

    /// `σ(t, x, u)`.
    #[inline]
    pub fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        match &self.kind {
            SigmaKind::Constant { c } => *c,
            SigmaKind::Affine { a, b } => a * u + b,
            SigmaKind::Smooth { offset, amplitude, scale } => offset + amplitude * libm::tanh(u / scale),
            SigmaKind::Custom { f, .. } => f(t, x, u),
        }
    }

    /// `σ(t, x, u)`, failing on non-finite values.
    pub fn try_eval(&self, t: f64, x: f64, u: f64) -> Result<f64> {
        let v = self.eval(t, x, u);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Coefficient(format!("σ({t}, {x}, {u}) is not finite")))
        }
    }

    /// The constant value when `σ` depends on neither `x` nor `u`.
    pub fn as_constant(&self) -> Option<f64> {
        match self.kind {
            SigmaKind::Constant { c } => Some(c),
            SigmaKind::Affine { a: 0.0, b } => Some(b),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            SigmaKind::Constant { c } => format!("constant({c})"),
            SigmaKind::Affine { a, b } => format!("affine(a={a}, b={b})"),
            SigmaKind::Smooth { offset, amplitude, scale } => {
                format!("smooth(offset={offset}, amplitude={amplitude}, scale={scale})")
            }
            SigmaKind::Custom { label, .. } => label.clone(),
        }
    }

    /// Checks the declared constants: finite, positive, `p0 > 6/(4H-1)`.
    pub fn check_declared(&self, hurst: f64) -> Result<()> {
        let c = &self.constants;
        let all = [c.growth, c.lipschitz, c.du, c.dx_at_zero, c.dxu, c.weighted_du_lipschitz];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Validation("declared hypothesis constants must be positive and finite".into()));
        }
        let thr = p0_threshold(hurst);
        if !(c.p0 > thr) {
            return Err(Error::Validation(format!(
                "hypothesis violation: weighted derivative Lipschitz condition needs p0 > 6/(4H-1) = {thr:.4}, got p0 = {}",
                c.p0
            )));
        }
        Ok(())
    }
}

/// Grid of `(t, x, u)` points on which the hypothesis is checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl Sweep {
    /// `t ∈ {0, T/2, T}`, 17 points of `[-L, L]`, 41 points of `[-10, 10]`.
    pub fn default_for(half_width: f64, horizon: f64) -> Self {
        Self { ts: alloc::vec![0.0, 0.5 * horizon, horizon], xs: linspace(-half_width, half_width, 17), us: linspace(-10.0, 10.0, 41) }
    }
}

/// Outcome of one inequality on the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub max_ratio: f64,
    pub declared: f64,
    /// The ratio keeps growing toward the edge of the sweep, so no finite
    /// constant is plausible.
    pub unbounded: bool,
    pub passed: bool,
}

/// Hypothesis validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub label: String,
    pub hurst: f64,
    pub p0: f64,
    pub p0_threshold: f64,
    pub checks: Vec<ConditionCheck>,
    pub passed: bool,
}

impl ValidationReport {
    /// Names of failed conditions.
    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

pub const LINEAR_GROWTH: &str = "linear growth";
pub const LIPSCHITZ_IN_U: &str = "Lipschitz in u";
pub const BOUNDED_DU: &str = "bounded u-derivative";
pub const BOUNDED_DX_AT_ZERO: &str = "bounded x-derivative at u = 0";
pub const BOUNDED_DXU: &str = "bounded mixed derivative";
pub const WEIGHTED_DU_LIPSCHITZ: &str = "weighted derivative Lipschitz (p0 > 6/(4H-1))";

const FD_STEP: f64 = 1e-5;
/// Relative growth of the ratio between the inner and outer half of the `u`
/// range above which it is flagged as unbounded.
const GROWTH_FLAG: f64 = 0.25;

struct Acc {
    max: f64,
    inner: f64,
    outer: f64,
}

impl Acc {
    fn new() -> Self {
        Self { max: 0.0, inner: 0.0, outer: 0.0 }
    }

    fn push(&mut self, ratio: f64, outer: bool) {
        self.max = self.max.max(ratio);
        if outer {
            self.outer = self.outer.max(ratio);
        } else {
            self.inner = self.inner.max(ratio);
        }
    }

    fn check(&self, name: &str, declared: f64, growth_test: bool) -> ConditionCheck {
        let unbounded = growth_test && self.outer > (1.0 + GROWTH_FLAG) * self.inner && self.outer > 1e-12;
        ConditionCheck {
            name: name.to_string(),
            max_ratio: self.max,
            declared,
            unbounded,
            passed: !unbounded && self.max <= declared * (1.0 + 1e-9),
        }
    }
}

/// Checks each condition of the hypothesis on `sweep` with central finite
/// differences (step 1e-5) and compares with the declared constants.
pub fn validate_hypothesis(spec: &SigmaSpec, hurst: f64, sweep: &Sweep) -> Result<ValidationReport> {
    crate::rough_space::check_hurst(hurst)?;
    if sweep.ts.is_empty() || sweep.xs.is_empty() || sweep.us.len() < 2 {
        return Err(Error::Validation("sweep needs times, positions and at least two u values".into()));
    }
    let h = FD_STEP;
    let s = |t: f64, x: f64, u: f64| spec.try_eval(t, x, u);
    let du = |t: f64, x: f64, u: f64| -> Result<f64> { Ok((s(t, x, u + h)? - s(t, x, u - h)?) / (2.0 * h)) };
    let dx = |t: f64, x: f64, u: f64| -> Result<f64> { Ok((s(t, x + h, u)? - s(t, x - h, u)?) / (2.0 * h)) };
    let dxu = |t: f64, x: f64, u: f64| -> Result<f64> { Ok((du(t, x + h, u)? - du(t, x - h, u)?) / (2.0 * h)) };
    let u_max = sweep.us.iter().fold(0.0f64, |m, u| m.max(u.abs()));
    let is_outer = |u: f64| u.abs() > 0.5 * u_max;
    let p0 = spec.constants.p0;

    let (mut growth, mut lip, mut d_u, mut d_x, mut d_xu, mut wlip) =
        (Acc::new(), Acc::new(), Acc::new(), Acc::new(), Acc::new(), Acc::new());
    for &t in &sweep.ts {
        for &x in &sweep.xs {
            let lam = libm::pow(weight_lambda(x, hurst), -1.0 / p0);
            d_x.push(dx(t, x, 0.0)?.abs(), false);
            let vals: Vec<f64> = sweep.us.iter().map(|&u| s(t, x, u)).collect::<Result<_>>()?;
            let ders: Vec<f64> = sweep.us.iter().map(|&u| du(t, x, u)).collect::<Result<_>>()?;
            for (i, &u) in sweep.us.iter().enumerate() {
                growth.push(vals[i].abs() / (1.0 + u.abs()), is_outer(u));
                d_u.push(ders[i].abs(), is_outer(u));
                d_xu.push(dxu(t, x, u)?.abs(), is_outer(u));
                for j in 0..i {
                    let v = sweep.us[j];
                    let outer = is_outer(u) || is_outer(v);
                    lip.push((vals[i] - vals[j]).abs() / (u - v).abs(), outer);
                    wlip.push(lam * (ders[i] - ders[j]).abs() / (u - v).abs(), outer);
                }
            }
        }
    }
    for a in [&growth, &lip, &d_u, &d_x, &d_xu, &wlip] {
        if !a.max.is_finite() {
            return Err(Error::Validation(format!("derivative estimation failed for {}: non-finite difference quotient", spec.label())));
        }
    }
    let c = &spec.constants;
    let thr = p0_threshold(hurst);
    let mut w = wlip.check(WEIGHTED_DU_LIPSCHITZ, c.weighted_du_lipschitz, false);
    w.passed &= p0 > thr;
    let checks = alloc::vec![
        growth.check(LINEAR_GROWTH, c.growth, true),
        lip.check(LIPSCHITZ_IN_U, c.lipschitz, true),
        d_u.check(BOUNDED_DU, c.du, true),
        d_x.check(BOUNDED_DX_AT_ZERO, c.dx_at_zero, false),
        d_xu.check(BOUNDED_DXU, c.dxu, true),
        w,
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { label: spec.label(), hurst, p0, p0_threshold: thr, checks, passed })
}

/// Renders a report as human-readable lines.
pub fn describe(report: &ValidationReport) -> String {
    let mut out = String::new();
    for c in &report.checks {
        out.push_str(&format!(
            "{:<48} max ratio {:>12.6e}  declared {:>10.4}  {}{}\n",
            c.name,
            c.max_ratio,
            c.declared,
            if c.passed { "ok" } else { "FAIL" },
            if c.unbounded { " (unbounded on sweep)" } else { "" }
        ));
    }
    out
}
