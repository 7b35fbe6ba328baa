use crate::error::{Error, Result};
use crate::math::{golden_min, log_sum_exp};
use crate::prelude::*;
use crate::problem::ProblemSpec;

/// Constant in `ψ̄(p) = p ψ(p) / (C₀ log p)`.
pub const C0: f64 = 1.77638;

const TABLE_POINTS: usize = 128;
/// Upper end of the tabulation when the support is unbounded.
const TABLE_P_MAX: f64 = 1.0e3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiKind {
    NaturalFromR,
    Power(f64),
    Analytic,
    Bar,
}

/// A ψ-function on `(a, b)`, tabulated on a log-spaced grid and optionally
/// backed by a closed form.
#[derive(Clone)]
pub struct PsiFunction {
    pub support: (f64, f64),
    pub p: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: PsiKind,
    exact: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl core::fmt::Debug for PsiFunction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PsiFunction")
            .field("support", &self.support)
            .field("kind", &self.kind)
            .field("points", &self.p.len())
            .finish()
    }
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

impl PsiFunction {
    /// Closed-form ψ on `(a, b)`; `b` may be infinite.
    pub fn analytic(a: f64, b: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Self::with_exact(a, b, Arc::new(f), PsiKind::Analytic)
    }

    /// `ψ(p) = p^β` on `[1, ∞)`.
    pub fn power(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid("power psi needs beta > 0"));
        }
        Self::with_exact(1.0, f64::INFINITY, Arc::new(move |p: f64| p.powf(beta)), PsiKind::Power(beta))
    }

    fn with_exact(a: f64, b: f64, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, kind: PsiKind) -> Result<Self> {
        if !(a >= 1.0 && b > a) {
            return Err(Error::invalid("psi support needs 1 <= a < b"));
        }
        let hi = if b.is_finite() { b } else { TABLE_P_MAX.max(2.0 * a) };
        let p = log_grid(a, hi, TABLE_POINTS);
        let values: Vec<f64> = p.iter().map(|&x| f(x)).collect();
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("psi must be positive and finite on its support"));
        }
        Ok(PsiFunction { support: (a, b), p, values, kind, exact: Some(f) })
    }

    /// Tabulated ψ; the support is `[p₀, p_last]`.
    pub fn tabulated(p: Vec<f64>, values: Vec<f64>, kind: PsiKind) -> Result<Self> {
        if p.len() < 2 || p.len() != values.len() {
            return Err(Error::invalid("psi table needs matching p and values with at least two points"));
        }
        if p[0] < 1.0 || p.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("psi table p must start at >= 1 and increase"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("psi must be positive and finite on its support"));
        }
        Ok(PsiFunction { support: (p[0], p[p.len() - 1]), p, values, kind, exact: None })
    }

    /// `ψ(p)`; `+∞` outside the support.
    pub fn eval(&self, p: f64) -> f64 {
        let (a, b) = self.support;
        if !(p >= a && p <= b) || (p == b && b.is_infinite()) {
            return f64::INFINITY;
        }
        if let Some(f) = &self.exact {
            return f(p);
        }
        let i = self.p.partition_point(|&x| x <= p).clamp(1, self.p.len() - 1);
        let (p0, p1) = (self.p[i - 1], self.p[i]);
        let (v0, v1) = (self.values[i - 1].ln(), self.values[i].ln());
        let s = (p.ln() - p0.ln()) / (p1.ln() - p0.ln());
        (v0 + s * (v1 - v0)).exp()
    }

    /// Same function divided by `ψ(p_ref)`.
    pub fn normalized(&self, p_ref: f64) -> Result<Self> {
        let c = self.eval(p_ref);
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid("normalisation point outside the psi support"));
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v /= c);
        if let Some(f) = self.exact.clone() {
            out.exact = Some(Arc::new(move |p| f(p) / c));
        }
        Ok(out)
    }

    /// `ψ̄(p) = p ψ(p) / (C₀ log p)` on `[max(a, e), b)`.
    pub fn bar(&self) -> Result<Self> {
        let a = self.support.0.max(core::f64::consts::E);
        let b = self.support.1;
        if !(b > a) {
            return Err(Error::invalid("psi support ends before e; psi-bar is empty"));
        }
        let base = self.clone();
        let f = move |p: f64| p * base.eval(p) / (C0 * p.ln());
        let hi = if b.is_finite() { b } else { self.p[self.p.len() - 1].max(2.0 * a) };
        let p = log_grid(a, hi, TABLE_POINTS);
        let values: Vec<f64> = p.iter().map(|&x| f(x)).collect();
        let exact: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>> =
            if self.exact.is_some() { Some(Arc::new(f)) } else { None };
        let support = if exact.is_some() { (a, b) } else { (a, hi) };
        Ok(PsiFunction { support, p, values, kind: PsiKind::Bar, exact })
    }

    /// Minimum discrete slope increment of `w(p) = p log ψ(p)` on the table;
    /// `≥ −1e−9` for a valid ψ-function.
    pub fn convexity_defect(&self) -> f64 {
        let w: Vec<f64> = self.p.iter().zip(&self.values).map(|(p, v)| p * v.ln()).collect();
        let slopes: Vec<f64> = (1..w.len()).map(|i| (w[i] - w[i - 1]) / (self.p[i] - self.p[i - 1])).collect();
        slopes.windows(2).map(|s| s[1] - s[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn is_valid(&self) -> bool {
        self.values.iter().all(|v| *v > 0.0) && self.convexity_defect() >= -1e-9
    }
}

/// `ψ_R(p) = (∫ R^p dμ)^{1/p}` by 2048-node quadrature, evaluated in the log
/// domain. The support stops at the last `p` with a finite value.
pub fn natural_psi_from_r(spec: &ProblemSpec, p_grid: &[f64]) -> Result<PsiFunction> {
    let d = spec.dim();
    let per_dim = (2048f64.powf(1.0 / d as f64)).ceil() as usize;
    let (nodes, w) = spec.mu.quadrature_nodes(per_dim);
    let log_r: Vec<f64> = nodes.points().map(|x| spec.envelope_r.as_ref()(x).abs().ln()).collect();
    if log_r.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("envelope R is not finite on the quadrature nodes"));
    }
    let mut ps = Vec::with_capacity(p_grid.len());
    let mut vals = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let l = (log_sum_exp(log_r.iter().map(|lr| p * lr)) + w.ln()) / p;
        let v = l.exp();
        if !(v.is_finite() && v > 0.0) {
            break;
        }
        ps.push(p);
        vals.push(v);
    }
    PsiFunction::tabulated(ps, vals, PsiKind::NaturalFromR)
}

/// Default tabulation for [`natural_psi_from_r`]: 128 log-spaced points on `[1, 512]`.
pub fn default_p_grid() -> Vec<f64> {
    log_grid(1.0, 512.0, TABLE_POINTS)
}

/// `v_*(x) = inf_{y ∈ (0,1)} (x y + log ψ(1/y))`, golden section over the
/// part of `(0, 1]` where `ψ(1/y)` is finite.
pub fn v_star(psi: &PsiFunction, x: f64) -> f64 {
    let (a, b) = psi.support;
    let y_hi = (1.0 / a).min(1.0);
    let y_lo = if b.is_finite() { 1.0 / b } else { 1e-12 };
    let objective = |y: f64| x * y + psi.eval(1.0 / y).ln();
    let (_, v) = golden_min(objective, y_lo, y_hi, 1e-10);
    v
}
