//! Named problem families with closed-form envelopes, metrics, power norms and
//! solutions.
//!
//! | name             | kernel                      | domain        |
//! |------------------|-----------------------------|---------------|
//! | `constant`       | `K = γ`                     | any box       |
//! | `separable-poly` | `K = a(t) b(s)`, polynomial | 1-D interval  |
//! | `gauss-conv`     | `K = c exp(−κ |t − s|²)`    | any box       |
//!
//! The forcing is a polynomial in the first coordinate. The measure is the
//! normalised Lebesgue measure of the box.

use super::{AnalyticInfo, Function, Kernel, MetricKind, Operator, ProblemSpec};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::prelude::*;

pub const CONSTANT: &str = "constant";
pub const SEPARABLE_POLY: &str = "separable-poly";
pub const GAUSS_CONV: &str = "gauss-conv";
/// Library-level kernels built with [`ProblemSpec::builder`].
pub const CUSTOM: &str = "custom";

pub const NAMES: [&str; 4] = [CONSTANT, SEPARABLE_POLY, GAUSS_CONV, CUSTOM];

/// Polynomial with coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(self.0.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect())
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.0.is_empty() || other.0.is_empty() {
            return Polynomial(Vec::new());
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial(out)
    }

    /// `∫ p dμ` for the normalised Lebesgue measure on `[lo, hi]`.
    pub fn mean(&self, lo: f64, hi: f64) -> f64 {
        let anti = |x: f64| self.0.iter().enumerate().rev().fold(0.0, |acc, (k, &c)| acc * x + c / (k + 1) as f64) * x;
        (anti(hi) - anti(lo)) / (hi - lo)
    }

    /// `max |p|` over `[lo, hi]` by dense evaluation.
    pub fn sup_abs(&self, lo: f64, hi: f64) -> f64 {
        const POINTS: usize = 20_001;
        (0..POINTS)
            .map(|i| self.eval(lo + (hi - lo) * i as f64 / (POINTS - 1) as f64).abs())
            .fold(0.0, f64::max)
    }

    /// `∫ |p| dμ`: exact when `p` keeps one sign, midpoint rule otherwise.
    pub fn mean_abs(&self, lo: f64, hi: f64) -> f64 {
        const POINTS: usize = 20_001;
        let vals: Vec<f64> =
            (0..POINTS).map(|i| self.eval(lo + (hi - lo) * i as f64 / (POINTS - 1) as f64)).collect();
        if vals.iter().all(|&v| v >= 0.0) || vals.iter().all(|&v| v <= 0.0) {
            return self.mean(lo, hi).abs();
        }
        let nodes = crate::math::midpoints(lo, hi, 1 << 16);
        nodes.iter().map(|&x| self.eval(x).abs()).sum::<f64>() / nodes.len() as f64
    }
}

fn poly_fn(p: &Polynomial) -> Function {
    let p = p.clone();
    Arc::new(move |t: &[f64]| p.eval(t[0]))
}

fn check_coeffs(name: &str, c: &[f64]) -> Result<Polynomial> {
    if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name}: need a non-empty list of finite coefficients")));
    }
    Ok(Polynomial(c.to_vec()))
}

/// `∫ f dμ` for a polynomial in the first coordinate.
fn forcing_mean(f: &Polynomial, domain: &DomainSpec) -> f64 {
    let (lo, hi) = domain.bounds()[0];
    f.mean(lo, hi)
}

/// `K(t, s) = γ`, solution `y = f + γ ∫f dμ / (1 − γ)`.
pub fn constant(gamma: f64, forcing: &[f64], bounds: &[(f64, f64)], grid: usize) -> Result<ProblemSpec> {
    if !gamma.is_finite() {
        return Err(Error::invalid("constant: gamma must be finite"));
    }
    let domain = DomainSpec::new(bounds.to_vec(), grid)?;
    let f = check_coeffs("forcing", forcing)?;
    let fd = f.derivative();
    let f_mean = forcing_mean(&f, &domain);
    let kernel: Kernel = Arc::new(move |_t: &[f64], _s: &[f64]| gamma);
    let dt: Option<Kernel> = (domain.dim() == 1).then(|| Arc::new(|_t: &[f64], _s: &[f64]| 0.0) as Kernel);
    let f_sol = f.clone();
    let analytic = AnalyticInfo {
        power_norms: Some(Arc::new(move |m, op| match op {
            Operator::S => gamma.abs().powi(m as i32),
            Operator::U => gamma.powi(2 * m as i32),
        })),
        solution: Some(Arc::new(move |t: &[f64], lambda: f64| {
            let g = lambda * gamma;
            f_sol.eval(t[0]) + g * f_mean / (1.0 - g)
        })),
        solution_dt: Some(poly_fn(&fd)),
    };
    let mut b = ProblemSpec::builder(domain, kernel, poly_fn(&f))
        .name(CONSTANT)
        .envelope(Arc::new(move |_s: &[f64]| gamma.abs()))
        .metric(MetricKind::Holder { alpha: 1.0, c: 0.0 })
        .forcing_dt(poly_fn(&fd))
        .analytic(analytic);
    if let Some(v) = dt {
        b = b.kernel_dt(v);
    }
    b.build()
}

/// `K(t, s) = a(t) b(s)` on an interval; with `c = ∫ab dμ` and `k = ∫bf dμ`
/// the solution is `y = f + a(t) k / (1 − c)`.
pub fn separable_poly(a: &[f64], b: &[f64], forcing: &[f64], bounds: (f64, f64), grid: usize) -> Result<ProblemSpec> {
    let domain = DomainSpec::new(vec![bounds], grid)?;
    let (lo, hi) = bounds;
    let a = check_coeffs("a", a)?;
    let b = check_coeffs("b", b)?;
    let f = check_coeffs("forcing", forcing)?;
    let (ad, fd) = (a.derivative(), f.derivative());

    let sup_a = a.sup_abs(lo, hi);
    let lip_a = ad.sup_abs(lo, hi);
    let c_ab = a.mul(&b).mean(lo, hi);
    let c_aabb = a.mul(&a).mul(&b).mul(&b).mean(lo, hi);
    let mean_abs_b = b.mean_abs(lo, hi);
    let mean_bb = b.mul(&b).mean(lo, hi);
    let sup_aa = sup_a * sup_a;
    let k_bf = b.mul(&f).mean(lo, hi);

    let (ka, kb) = (a.clone(), b.clone());
    let kernel: Kernel = Arc::new(move |t: &[f64], s: &[f64]| ka.eval(t[0]) * kb.eval(s[0]));
    let (va, vb) = (ad.clone(), b.clone());
    let dt: Kernel = Arc::new(move |t: &[f64], s: &[f64]| va.eval(t[0]) * vb.eval(s[0]));
    let rb = b.clone();
    let envelope: Function = Arc::new(move |s: &[f64]| sup_a * rb.eval(s[0]).abs());
    let metric = MetricKind::Holder { alpha: 1.0, c: if sup_a > 0.0 { lip_a / sup_a } else { 0.0 } };

    let (sa, sf) = (a.clone(), f.clone());
    let (sad, sfd) = (ad.clone(), fd.clone());
    let analytic = AnalyticInfo {
        power_norms: Some(Arc::new(move |m, op| match op {
            Operator::S => sup_a * mean_abs_b * c_ab.abs().powi(m as i32 - 1),
            Operator::U => sup_aa * mean_bb * c_aabb.powi(m as i32 - 1),
        })),
        solution: Some(Arc::new(move |t: &[f64], lambda: f64| {
            sf.eval(t[0]) + lambda * sa.eval(t[0]) * k_bf / (1.0 - lambda * c_ab)
        })),
        solution_dt: Some(Arc::new(move |t: &[f64]| sfd.eval(t[0]) + sad.eval(t[0]) * k_bf / (1.0 - c_ab))),
    };
    ProblemSpec::builder(domain, kernel, poly_fn(&f))
        .name(SEPARABLE_POLY)
        .envelope(envelope)
        .metric(metric)
        .kernel_dt(dt)
        .forcing_dt(poly_fn(&fd))
        .analytic(analytic)
        .build()
}

/// `K(t, s) = c exp(−κ |t − s|²)`. No closed-form solution or power norms.
pub fn gauss_conv(c: f64, kappa: f64, forcing: &[f64], bounds: &[(f64, f64)], grid: usize) -> Result<ProblemSpec> {
    if !(c.is_finite() && kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid("gauss-conv: need finite c and kappa > 0"));
    }
    let domain = DomainSpec::new(bounds.to_vec(), grid)?;
    let f = check_coeffs("forcing", forcing)?;
    let fd = f.derivative();
    let sq = |t: &[f64], s: &[f64]| t.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let kernel: Kernel = Arc::new(move |t: &[f64], s: &[f64]| c * (-kappa * sq(t, s)).exp());
    let mut b = ProblemSpec::builder(domain.clone(), kernel, poly_fn(&f))
        .name(GAUSS_CONV)
        .envelope(Arc::new(move |_s: &[f64]| c.abs()))
        // |∂/∂t exp(−κu²)| ≤ sqrt(2κ) e^{−1/2}
        .metric(MetricKind::Holder { alpha: 1.0, c: (2.0 * kappa / core::f64::consts::E).sqrt() })
        .forcing_dt(poly_fn(&fd));
    if domain.dim() == 1 {
        b = b.kernel_dt(Arc::new(move |t: &[f64], s: &[f64]| {
            -2.0 * kappa * (t[0] - s[0]) * c * (-kappa * (t[0] - s[0]) * (t[0] - s[0])).exp()
        }));
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_basics() {
        let p = Polynomial(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative(), Polynomial(vec![-2.0, 6.0]));
        assert!((p.mean(0.0, 1.0) - (1.0 - 1.0 + 1.0)).abs() < 1e-15);
        assert!((Polynomial(vec![0.0, 1.0]).mean(1.0, 3.0) - 2.0).abs() < 1e-15);
        // |x − 1/2| on [0, 1] has mean 1/4
        assert!((Polynomial(vec![-0.5, 1.0]).mean_abs(0.0, 1.0) - 0.25).abs() < 1e-8);
    }

    #[test]
    fn separable_solution_satisfies_equation() {
        let p = separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 11).unwrap();
        let y = p.analytic.solution.clone().unwrap();
        // y = 1.5 t for K = ts, f = t
        for &t in &[0.0, 0.3, 1.0] {
            assert!((y(&[t], 1.0) - 1.5 * t).abs() < 1e-14);
        }
        let dy = p.analytic.solution_dt.clone().unwrap();
        assert!((dy(&[0.2]) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn constant_solution_is_geometric_sum() {
        let p = constant(0.5, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        let y = p.analytic.solution.clone().unwrap();
        assert!((y(&[0.4], 1.0) - 2.0).abs() < 1e-15);
        // λ = 1/2 halves the kernel: 1 / (1 − 1/4)
        assert!((y(&[0.4], 0.5) - 4.0 / 3.0).abs() < 1e-15);
    }
}
