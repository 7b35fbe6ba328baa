//! The integral-equation instance and its operator-analytic quantities.
//!
//! A [`ProblemSpec`] bundles the box `T`, the probability measure `μ`, the
//! kernel `K(t, s)` and forcing `f(t)` of
//! `y = f + S[y]`, `S[g](t) = ∫ K(t, s) g(s) μ(ds)`,
//! together with the envelope `R(s) ≥ sup_t |K(t, s)|` and a description of the
//! natural distance `d(t, s) = sup_x |K(t, x) − K(s, x)| / R(x)`.

pub(crate) mod norms;
pub mod registry;

pub use norms::{
    natural_distance, operator_norm, operator_norm_of, power_norms, power_norms_with, DecayFit,
    NormMethod, NormOptions, PowerNormTable, QUADRATURE_MAX_POWER,
};

use crate::domain::{DomainSpec, MeasureSampler};
use crate::error::{Error, Result};
use crate::prelude::*;
use crate::rng::{self, Purpose};

pub use crate::error::Operator;

/// Kernel `K(t, s)` on `T × T`.
pub type Kernel = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// Real function on `T`.
pub type Function = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Closed-form power norm `r_m` of `S` or `U`.
pub type PowerNormFormula = Arc<dyn Fn(usize, Operator) -> f64 + Send + Sync>;
/// Closed-form solution `y_λ(t)` of `y = f + λ S[y]`.
pub type SolutionFormula = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// How the natural distance is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricKind {
    /// `d(t, s) = C |t − s|^α`.
    Holder { alpha: f64, c: f64 },
    /// `d(t, s) = C min(|log |t − s||^{−γ}, 1)`.
    LogPower { gamma: f64, c: f64 },
    /// Lower estimate by sampling `x`; no closed form.
    CustomTable,
}

/// Closed forms available for registry problems.
#[derive(Clone, Default)]
pub struct AnalyticInfo {
    pub power_norms: Option<PowerNormFormula>,
    pub solution: Option<SolutionFormula>,
    /// Exact `y′` for 1-D problems.
    pub solution_dt: Option<Function>,
}

/// The equation being solved.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: DomainSpec,
    pub mu: MeasureSampler,
    pub kernel: Kernel,
    pub forcing: Function,
    /// `V(t, s) = ∂K/∂t`, 1-D problems only.
    pub kernel_dt: Option<Kernel>,
    /// `f′`; the derivative estimator falls back to a central difference.
    pub forcing_dt: Option<Function>,
    pub envelope_r: Function,
    /// Set when `R` was estimated by grid maximisation instead of supplied.
    pub envelope_r_approximate: bool,
    pub envelope_q: Option<Function>,
    pub metric_kind: MetricKind,
    /// `sup_t |f(t)|` by grid maximisation.
    pub f_norm: f64,
    /// Midpoint nodes per dimension for deterministic integrals.
    pub quadrature_nodes: usize,
    pub analytic: AnalyticInfo,
}

impl core::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("mu", &self.mu)
            .field("metric_kind", &self.metric_kind)
            .field("f_norm", &self.f_norm)
            .field("quadrature_nodes", &self.quadrature_nodes)
            .finish_non_exhaustive()
    }
}

/// Result of spot-checking the envelope and Lipschitz conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeReport {
    pub pairs_checked: usize,
    /// Largest `|K(t, s)| / R(s)`; should not exceed 1.
    pub max_envelope_ratio: f64,
    /// Largest `|K(t, x) − K(s, x)| / (R(x) d(t, s))`; should not exceed 1.
    pub max_lipschitz_ratio: f64,
}

impl EnvelopeReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_envelope_ratio <= 1.0 + tol && self.max_lipschitz_ratio <= 1.0 + tol
    }
}

pub const DEFAULT_QUADRATURE_NODES: usize = 512;

pub struct ProblemBuilder {
    name: String,
    domain: DomainSpec,
    mu: Option<MeasureSampler>,
    kernel: Kernel,
    forcing: Function,
    kernel_dt: Option<Kernel>,
    forcing_dt: Option<Function>,
    envelope_r: Option<Function>,
    envelope_q: Option<Function>,
    metric_kind: MetricKind,
    quadrature_nodes: usize,
    analytic: AnalyticInfo,
}

impl ProblemSpec {
    pub fn builder(domain: DomainSpec, kernel: Kernel, forcing: Function) -> ProblemBuilder {
        ProblemBuilder {
            name: String::from("custom"),
            domain,
            mu: None,
            kernel,
            forcing,
            kernel_dt: None,
            forcing_dt: None,
            envelope_r: None,
            envelope_q: None,
            metric_kind: MetricKind::CustomTable,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
            analytic: AnalyticInfo::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Same problem with `f` replaced; closed-form solutions are dropped.
    pub fn with_forcing(&self, forcing: Function, forcing_dt: Option<Function>) -> Result<Self> {
        let f_norm = sup_on_grid(&self.domain, &forcing)?;
        let mut out = self.clone();
        out.forcing = forcing;
        out.forcing_dt = forcing_dt;
        out.f_norm = f_norm;
        out.analytic.solution = None;
        out.analytic.solution_dt = None;
        Ok(out)
    }

    /// Same problem on a grid of different resolution.
    pub fn with_grid(&self, grid_points_per_dim: usize) -> Result<Self> {
        let mut out = self.clone();
        out.domain = self.domain.with_grid(grid_points_per_dim)?;
        Ok(out)
    }

    /// `f′(t)`, exact when supplied, otherwise by a central difference with
    /// step `1e−5` (one-sided at the box ends).
    pub fn forcing_derivative(&self, t: &[f64]) -> f64 {
        if let Some(fd) = &self.forcing_dt {
            return fd(t);
        }
        const H: f64 = 1e-5;
        let (lo, hi) = self.domain.bounds()[0];
        let x = t[0];
        let a = (x - H).max(lo);
        let b = (x + H).min(hi);
        ((self.forcing)(&[b]) - (self.forcing)(&[a])) / (b - a)
    }

    /// Spot-checks `|K(t, s)| ≤ R(s)` and `|K(t, x) − K(s, x)| ≤ R(x) d(t, s)`
    /// on `pairs` random points.
    pub fn check_envelope(&self, pairs: usize, seed: u64) -> EnvelopeReport {
        let dim = self.dim();
        let mut rng = rng::substream(seed, Purpose::Check, 1, 0, 0);
        let mut t = vec![0.0; dim];
        let mut s = vec![0.0; dim];
        let mut x = vec![0.0; dim];
        let mut env = 0.0f64;
        let mut lip = 0.0f64;
        for _ in 0..pairs {
            self.mu.sample_into(&mut rng, &mut t);
            self.mu.sample_into(&mut rng, &mut s);
            self.mu.sample_into(&mut rng, &mut x);
            let r_s = (self.envelope_r)(&s);
            let k = (self.kernel)(&t, &s).abs();
            env = env.max(ratio(k, r_s));
            if !matches!(self.metric_kind, MetricKind::CustomTable) {
                let r_x = (self.envelope_r)(&x);
                let diff = ((self.kernel)(&t, &x) - (self.kernel)(&s, &x)).abs();
                let d = natural_distance(self, &t, &s);
                lip = lip.max(ratio(diff, r_x * d));
            }
        }
        EnvelopeReport { pairs_checked: pairs, max_envelope_ratio: env, max_lipschitz_ratio: lip }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 1e-14 * den.abs().max(1.0) {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Grid used for sup-norm evaluations of functions on `T`.
fn sup_grid(domain: &DomainSpec) -> DomainSpec {
    let per_dim = match domain.dim() {
        1 => 2001,
        2 => 101,
        3 => 21,
        _ => 6,
    };
    domain.with_grid(per_dim.max(domain.grid_points_per_dim())).unwrap_or_else(|_| domain.clone())
}

pub(crate) fn sup_on_grid(domain: &DomainSpec, g: &Function) -> Result<f64> {
    let mut best = 0.0f64;
    for p in sup_grid(domain).grid().points() {
        let v = g(p);
        if !v.is_finite() {
            return Err(Error::NonFinite { context: "forcing", t: p.to_vec(), x: Vec::new() });
        }
        best = best.max(v.abs());
    }
    Ok(best)
}

impl ProblemBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn measure(mut self, mu: MeasureSampler) -> Self {
        self.mu = Some(mu);
        self
    }

    pub fn kernel_dt(mut self, v: Kernel) -> Self {
        self.kernel_dt = Some(v);
        self
    }

    pub fn forcing_dt(mut self, fd: Function) -> Self {
        self.forcing_dt = Some(fd);
        self
    }

    pub fn envelope(mut self, r: Function) -> Self {
        self.envelope_r = Some(r);
        self
    }

    pub fn envelope_q(mut self, q: Function) -> Self {
        self.envelope_q = Some(q);
        self
    }

    pub fn metric(mut self, kind: MetricKind) -> Self {
        self.metric_kind = kind;
        self
    }

    pub fn quadrature_nodes(mut self, n: usize) -> Self {
        self.quadrature_nodes = n;
        self
    }

    pub fn analytic(mut self, info: AnalyticInfo) -> Self {
        self.analytic = info;
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        if self.kernel_dt.is_some() && self.domain.dim() != 1 {
            return Err(Error::invalid("kernel t-derivative is only supported on 1-D domains"));
        }
        if self.quadrature_nodes < 2 {
            return Err(Error::invalid("quadrature needs at least 2 nodes per dimension"));
        }
        match self.metric_kind {
            MetricKind::Holder { alpha, c } if !(alpha > 0.0 && alpha <= 1.0 && c >= 0.0) => {
                return Err(Error::invalid("holder metric needs alpha in (0, 1] and C >= 0"));
            }
            MetricKind::LogPower { gamma, c } if !(gamma > 0.0 && c >= 0.0) => {
                return Err(Error::invalid("log-power metric needs gamma > 0 and C >= 0"));
            }
            _ => {}
        }
        let f_norm = sup_on_grid(&self.domain, &self.forcing)?;
        let mu = self.mu.unwrap_or_else(|| MeasureSampler::uniform(&self.domain));
        if mu.dim() != self.domain.dim() {
            return Err(Error::invalid("measure and domain dimensions differ"));
        }
        let (envelope_r, approximate) = match self.envelope_r {
            Some(r) => (r, false),
            None => (auto_envelope(&self.domain, &self.kernel), true),
        };
        Ok(ProblemSpec {
            name: self.name,
            domain: self.domain,
            mu,
            kernel: self.kernel,
            forcing: self.forcing,
            kernel_dt: self.kernel_dt,
            forcing_dt: self.forcing_dt,
            envelope_r,
            envelope_r_approximate: approximate,
            envelope_q: self.envelope_q,
            metric_kind: self.metric_kind,
            f_norm,
            quadrature_nodes: self.quadrature_nodes,
            analytic: self.analytic,
        })
    }
}

/// `R(s) ≈ max_t |K(t, s)|` over the output grid. Only a lower estimate of the
/// essential supremum, hence flagged approximate.
fn auto_envelope(domain: &DomainSpec, kernel: &Kernel) -> Function {
    let grid = sup_grid(domain).grid();
    let kernel = kernel.clone();
    Arc::new(move |s: &[f64]| grid.points().map(|t| kernel(t, s).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts_problem() -> ProblemSpec {
        registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 101).unwrap()
    }

    #[test]
    fn envelope_and_lipschitz_hold_for_registry_kernels() {
        for p in [
            ts_problem(),
            registry::constant(0.5, &[1.0], &[(0.0, 1.0)], 11).unwrap(),
            registry::gauss_conv(0.5, 2.0, &[1.0], &[(0.0, 1.0)], 11).unwrap(),
            registry::gauss_conv(0.3, 1.0, &[0.0, 1.0], &[(0.0, 1.0), (0.0, 1.0)], 5).unwrap(),
        ] {
            let rep = p.check_envelope(10_000, 5);
            assert!(rep.holds(1e-9), "{}: {rep:?}", p.name);
        }
    }

    #[test]
    fn f_norm_is_attained_on_grid() {
        let p = registry::constant(0.5, &[0.0, 4.0, -4.0], &[(0.0, 1.0)], 11).unwrap();
        // 4t - 4t² peaks at t = 1/2 with value 1
        assert!((p.f_norm - 1.0).abs() < 0.01);
    }

    #[test]
    fn auto_envelope_is_flagged() {
        let d = DomainSpec::unit_interval(11).unwrap();
        let k: Kernel = Arc::new(|t: &[f64], s: &[f64]| t[0] * s[0]);
        let p = ProblemSpec::builder(d, k, Arc::new(|t: &[f64]| t[0])).build().unwrap();
        assert!(p.envelope_r_approximate);
        assert!(((p.envelope_r)(&[0.25]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn central_difference_fallback() {
        let d = DomainSpec::unit_interval(11).unwrap();
        let k: Kernel = Arc::new(|t: &[f64], s: &[f64]| t[0] * s[0]);
        let p = ProblemSpec::builder(d, k, Arc::new(|t: &[f64]| t[0] * t[0])).build().unwrap();
        assert!((p.forcing_derivative(&[0.5]) - 1.0).abs() < 1e-8);
        assert!((p.forcing_derivative(&[1.0]) - 2.0).abs() < 1e-4);
    }
}
