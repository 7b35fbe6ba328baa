use super::{MetricKind, Operator, ProblemSpec};
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::prelude::*;
use crate::rng::{self, Purpose};

/// How `r_m` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMethod {
    /// Registry closed form.
    Analytic,
    /// Rows of the `m`-th kernel-matrix power on the midpoint grid (1-D only).
    Quadrature,
    /// Dependent-trial estimate of `sup_t E Π |K|`, an upper estimate for `S`.
    Mc,
}

/// Least-squares decay fit `r_m ≤ C m^Δ β^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub c: f64,
    pub delta: f64,
    pub beta: f64,
}

impl DecayFit {
    pub fn bound(&self, m: usize) -> f64 {
        let m = m as f64;
        self.c * m.powf(self.delta) * self.beta.powf(m)
    }
}

/// `r_m(S)` and `r_m(U)` for `m = 1..=m_max` with their decay fits.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNormTable {
    pub m_max: usize,
    pub r_s: Vec<f64>,
    pub r_u: Vec<f64>,
    pub fit_s: DecayFit,
    pub fit_u: DecayFit,
    pub method: NormMethod,
}

impl PowerNormTable {
    /// Table from given sequences (index 0 holds `m = 1`).
    pub fn from_sequences(r_s: Vec<f64>, r_u: Vec<f64>, method: NormMethod) -> Result<Self> {
        if r_s.len() != r_u.len() || r_s.is_empty() {
            return Err(Error::invalid("r_S and r_U need the same non-zero length"));
        }
        if r_s.iter().chain(&r_u).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("power norms must be finite and non-negative"));
        }
        let fit_s = fit_decay(&r_s);
        let fit_u = fit_decay(&r_u);
        Ok(Self { m_max: r_s.len(), r_s, r_u, fit_s, fit_u, method })
    }

    pub fn r_s(&self, m: usize) -> f64 {
        self.r_s[m - 1]
    }

    pub fn r_u(&self, m: usize) -> f64 {
        self.r_u[m - 1]
    }

    /// Rejects the table unless both fitted decay rates are below one.
    pub fn ensure_contractive(&self) -> Result<()> {
        if !(self.fit_u.beta < 1.0) {
            return Err(Error::Contractivity { which: Operator::U, beta: self.fit_u.beta });
        }
        if !(self.fit_s.beta < 1.0) {
            return Err(Error::Contractivity { which: Operator::S, beta: self.fit_s.beta });
        }
        Ok(())
    }

    /// `r_m^{1/m}` at the largest tabulated `m`, a proxy for the spectral radius.
    pub fn radius_proxy(&self, which: Operator) -> f64 {
        let m = self.m_max;
        let r = match which {
            Operator::S => self.r_s(m),
            Operator::U => self.r_u(m),
        };
        r.powf(1.0 / m as f64)
    }
}

/// Fit on `m ≥ 2`, then `C` is raised until the bound holds for every `m`.
fn fit_decay(r: &[f64]) -> DecayFit {
    let floor = f64::MIN_POSITIVE;
    let pts: Vec<(f64, f64)> = r
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64, v.max(floor).ln()))
        .filter(|(m, _)| r.len() < 3 || *m >= 2.0)
        .collect();
    let (log_c, delta, log_beta) = if pts.len() >= 4 {
        let rows: Vec<Vec<f64>> = pts.iter().map(|&(m, _)| vec![1.0, m.ln(), m]).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        match crate::math::least_squares(&rows, &y) {
            Some(b) => (b[0], b[1], b[2]),
            None => fit_geometric(&pts),
        }
    } else {
        fit_geometric(&pts)
    };
    let beta = log_beta.exp();
    let mut fit = DecayFit { c: log_c.exp(), delta, beta };
    let worst = r
        .iter()
        .enumerate()
        .map(|(i, &v)| v / fit.bound(i + 1))
        .filter(|x| x.is_finite())
        .fold(1.0f64, f64::max);
    fit.c *= worst;
    fit
}

fn fit_geometric(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    if pts.len() < 2 {
        let (m, y) = pts[0];
        return (0.0, 0.0, y / m);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let slope = crate::math::fit_slope(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    (my - slope * mx, 0.0, slope)
}

fn kernel_power(k: f64, which: Operator) -> f64 {
    match which {
        Operator::S => k,
        Operator::U => k * k,
    }
}

/// `sup_t ∫ |K(t, s)| μ(ds)` (or with `K²` for `U`) over the output grid, by the
/// midpoint rule with `spec.quadrature_nodes` nodes per dimension.
pub fn operator_norm(spec: &ProblemSpec, which: Operator) -> Result<f64> {
    operator_norm_of(spec, &spec.kernel, which)
}

/// [`operator_norm`] for another kernel on the same domain, e.g. `∂K/∂t`.
pub fn operator_norm_of(spec: &ProblemSpec, kernel: &super::Kernel, which: Operator) -> Result<f64> {
    let (nodes, w) = spec.mu.quadrature_nodes(spec.quadrature_nodes);
    let grid = spec.domain.grid();
    let mut best = 0.0f64;
    for t in grid.points() {
        let mut acc = 0.0;
        for s in nodes.points() {
            let k = kernel(t, s);
            if !k.is_finite() {
                return Err(Error::NonFinite { context: "kernel", t: t.to_vec(), x: s.to_vec() });
            }
            acc += kernel_power(k, which).abs();
        }
        best = best.max(acc * w);
    }
    Ok(best)
}

/// Options for [`power_norms_with`].
#[derive(Debug, Clone, Copy)]
pub struct NormOptions {
    /// Tuples per power for [`NormMethod::Mc`].
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { mc_samples: 20_000, seed: 0 }
    }
}

/// Largest power the quadrature route computes.
pub const QUADRATURE_MAX_POWER: usize = 12;

pub fn power_norms(spec: &ProblemSpec, m_max: usize, method: NormMethod) -> Result<PowerNormTable> {
    power_norms_with(spec, m_max, method, &NormOptions::default())
}

pub fn power_norms_with(
    spec: &ProblemSpec,
    m_max: usize,
    method: NormMethod,
    opts: &NormOptions,
) -> Result<PowerNormTable> {
    if m_max < 2 {
        return Err(Error::invalid("m_max must be at least 2"));
    }
    let (r_s, r_u) = match method {
        NormMethod::Analytic => {
            let f = spec
                .analytic
                .power_norms
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("no closed-form power norms for {}", spec.name)))?;
            ((1..=m_max).map(|m| f(m, Operator::S)).collect(), (1..=m_max).map(|m| f(m, Operator::U)).collect())
        }
        NormMethod::Quadrature => {
            if spec.dim() != 1 || m_max > QUADRATURE_MAX_POWER {
                return Err(Error::OracleInfeasible(format!(
                    "quadrature power norms need dim = 1 and m_max <= {QUADRATURE_MAX_POWER}"
                )));
            }
            (quadrature_power_norms(spec, m_max, Operator::S)?, quadrature_power_norms(spec, m_max, Operator::U)?)
        }
        NormMethod::Mc => (mc_power_norms(spec, m_max, Operator::S, opts)?, mc_power_norms(spec, m_max, Operator::U, opts)?),
    };
    let table = PowerNormTable::from_sequences(r_s, r_u, method)?;
    if table.r_s.iter().chain(&table.r_u).any(|&v| v <= 0.0) {
        return Err(Error::invalid("power norms must be positive"));
    }
    table.ensure_contractive()?;
    Ok(table)
}

/// Kernel matrix `K(x_i, x_j)` on the midpoint nodes, row-major.
pub(crate) fn kernel_matrix(spec: &ProblemSpec, nodes: &Grid, which: Operator) -> Result<Vec<f64>> {
    let q = nodes.len();
    let mut m = vec![0.0; q * q];
    for (i, x) in nodes.points().enumerate() {
        for (j, s) in nodes.points().enumerate() {
            let k = (spec.kernel)(x, s);
            if !k.is_finite() {
                return Err(Error::NonFinite { context: "kernel", t: x.to_vec(), x: s.to_vec() });
            }
            m[i * q + j] = kernel_power(k, which);
        }
    }
    Ok(m)
}

/// `Kᵀ` on the midpoint nodes: entry `(j, i)` holds `K(x_i, x_j)`.
pub(crate) fn kernel_matrix_transposed(spec: &ProblemSpec, nodes: &Grid) -> Result<Vec<f64>> {
    let q = nodes.len();
    let mut m = kernel_matrix(spec, nodes, Operator::S)?;
    for i in 0..q {
        for j in i + 1..q {
            m.swap(i * q + j, j * q + i);
        }
    }
    Ok(m)
}

/// `row ← row · W · M` for a row vector and a `q × q` matrix.
pub(crate) fn row_times(row: &[f64], mat: &[f64], w: f64) -> Vec<f64> {
    let q = row.len();
    let mut out = vec![0.0; q];
    for (i, &ri) in row.iter().enumerate() {
        let a = ri * w;
        if a == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(&mat[i * q..(i + 1) * q]) {
            *o += a * mij;
        }
    }
    out
}

fn quadrature_power_norms(spec: &ProblemSpec, m_max: usize, which: Operator) -> Result<Vec<f64>> {
    let (nodes, w) = spec.mu.quadrature_nodes(spec.quadrature_nodes);
    let mat = kernel_matrix(spec, &nodes, which)?;
    let mut r = vec![0.0f64; m_max];
    for t in spec.domain.grid().points() {
        let mut row: Vec<f64> = Vec::with_capacity(nodes.len());
        for s in nodes.points() {
            let k = (spec.kernel)(t, s);
            if !k.is_finite() {
                return Err(Error::NonFinite { context: "kernel", t: t.to_vec(), x: s.to_vec() });
            }
            row.push(kernel_power(k, which));
        }
        for (m, rm) in r.iter_mut().enumerate() {
            if m > 0 {
                row = row_times(&row, &mat, w);
            }
            *rm = rm.max(row.iter().map(|v| v.abs()).sum::<f64>() * w);
        }
    }
    Ok(r)
}

fn mc_power_norms(spec: &ProblemSpec, m_max: usize, which: Operator, opts: &NormOptions) -> Result<Vec<f64>> {
    let grid = spec.domain.grid();
    let dim = spec.dim();
    let n = opts.mc_samples.max(2);
    let mut r = Vec::with_capacity(m_max);
    let mut xs = vec![0.0; m_max * dim];
    for m in 1..=m_max {
        let draws = (m * dim) as u64;
        let mut rng = rng::substream(opts.seed, Purpose::PowerNorm, ((which as u64) << 32) | m as u64, 0, draws);
        let mut sums = vec![0.0; grid.len()];
        for l in 0..n {
            rng::seek(&mut rng, l, draws);
            for k in 0..m {
                spec.mu.sample_into(&mut rng, &mut xs[k * dim..(k + 1) * dim]);
            }
            let mut tail = 1.0;
            for k in 0..m - 1 {
                tail *= kernel_power((spec.kernel)(&xs[k * dim..(k + 1) * dim], &xs[(k + 1) * dim..(k + 2) * dim]), which)
                    .abs();
            }
            for (acc, t) in sums.iter_mut().zip(grid.points()) {
                *acc += kernel_power((spec.kernel)(t, &xs[..dim]), which).abs() * tail;
            }
        }
        r.push(sums.iter().fold(0.0f64, |a, &b| a.max(b)) / n as f64);
    }
    Ok(r)
}

/// The natural distance `d(t, s)`.
pub fn natural_distance(spec: &ProblemSpec, t: &[f64], s: &[f64]) -> f64 {
    let dist = t.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    match spec.metric_kind {
        MetricKind::Holder { alpha, c } => c * dist.powf(alpha),
        MetricKind::LogPower { gamma, c } => {
            if dist == 0.0 {
                0.0
            } else {
                c * dist.ln().abs().powf(-gamma).min(1.0)
            }
        }
        MetricKind::CustomTable => {
            const SAMPLES: u64 = 1000;
            let dim = spec.dim();
            let mut rng = rng::substream(0, Purpose::Check, 2, 0, 0);
            let mut x = vec![0.0; dim];
            let mut best = 0.0f64;
            for _ in 0..SAMPLES {
                spec.mu.sample_into(&mut rng, &mut x);
                let diff = ((spec.kernel)(t, &x) - (spec.kernel)(s, &x)).abs();
                if diff == 0.0 {
                    continue;
                }
                let r = (spec.envelope_r)(&x);
                best = best.max(if r > 0.0 { diff / r } else { f64::INFINITY });
            }
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::registry;
    use super::*;
    use approx::assert_relative_eq;

    fn ts() -> ProblemSpec {
        registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 101).unwrap()
    }

    #[test]
    fn operator_norms_of_fixtures() {
        let p = ts();
        assert_relative_eq!(operator_norm(&p, Operator::S).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(operator_norm(&p, Operator::U).unwrap(), 1.0 / 3.0, epsilon = 1e-6);
        let c = registry::constant(0.5, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        assert_relative_eq!(operator_norm(&c, Operator::S).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_kernel_is_located() {
        let d = crate::domain::DomainSpec::unit_interval(5).unwrap();
        let k: super::super::Kernel = Arc::new(|t: &[f64], s: &[f64]| 1.0 / (t[0] - s[0]));
        let p = ProblemSpec::builder(d, k, Arc::new(|_t: &[f64]| 1.0)).quadrature_nodes(4).build().unwrap();
        // t = 0.125? grid is {0, .25, .5, .75, 1}; nodes are {.125, .375, ...} so no pole.
        assert!(operator_norm(&p, Operator::S).is_ok());
        let k2: super::super::Kernel = Arc::new(|_t: &[f64], s: &[f64]| if s[0] > 0.5 { f64::NAN } else { 1.0 });
        let p2 = ProblemSpec::builder(p.domain.clone(), k2, Arc::new(|_t: &[f64]| 1.0)).build().unwrap();
        match operator_norm(&p2, Operator::S) {
            Err(Error::NonFinite { t, x, .. }) => {
                assert_eq!(t, vec![0.0]);
                assert!(x[0] > 0.5);
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn analytic_power_norms_of_ts_kernel() {
        let t = power_norms(&ts(), 6, NormMethod::Analytic).unwrap();
        for m in 1..=3 {
            assert_relative_eq!(t.r_u(m), (1.0 / 3.0) * 0.2f64.powi(m as i32 - 1), max_relative = 1e-12);
        }
        assert_relative_eq!(t.r_s(2), 0.5 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(t.fit_s.beta, 1.0 / 3.0, max_relative = 1e-9);
        assert_relative_eq!(t.fit_s.c, 1.5, max_relative = 1e-9);
        assert!(t.fit_s.delta.abs() < 1e-9);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let p = ts();
        let q = power_norms(&p, 4, NormMethod::Quadrature).unwrap();
        let a = power_norms(&p, 4, NormMethod::Analytic).unwrap();
        assert_relative_eq!(q.r_s(2), 0.5 / 3.0, epsilon = 1e-6);
        for m in 1..=4 {
            assert_relative_eq!(q.r_s(m), a.r_s(m), epsilon = 1e-6);
            assert_relative_eq!(q.r_u(m), a.r_u(m), epsilon = 1e-6);
        }
        // r_1(S) = ||S|| through the same quadrature path
        assert_eq!(q.r_s(1), operator_norm(&p, Operator::S).unwrap());
    }

    #[test]
    fn constant_kernel_powers() {
        let c = registry::constant(0.5, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        let q = power_norms(&c, 5, NormMethod::Quadrature).unwrap();
        for m in 1..=5 {
            assert_relative_eq!(q.r_s(m), 0.5f64.powi(m as i32), max_relative = 1e-12);
        }
    }

    #[test]
    fn mc_estimates_are_close_and_submultiplicative() {
        let p = registry::gauss_conv(0.5, 1.0, &[1.0], &[(0.0, 1.0)], 21).unwrap();
        let mc = power_norms_with(&p, 5, NormMethod::Mc, &NormOptions { mc_samples: 40_000, seed: 3 }).unwrap();
        let q = power_norms(&p, 5, NormMethod::Quadrature).unwrap();
        for m in 1..=5 {
            // gauss-conv is positive so the MC route is unbiased for both operators
            assert_relative_eq!(mc.r_s(m), q.r_s(m), max_relative = 0.03);
            assert_relative_eq!(mc.r_u(m), q.r_u(m), max_relative = 0.03);
        }
        for t in [&mc, &q] {
            let tol = if t.method == NormMethod::Mc { 1.05 } else { 1.0 + 1e-9 };
            for m in 1..=5 {
                for k in 1..=(5 - m) {
                    assert!(t.r_s(m + k) <= t.r_s(m) * t.r_s(k) * tol);
                    assert!(t.r_u(m + k) <= t.r_u(m) * t.r_u(k) * tol);
                }
            }
        }
    }

    #[test]
    fn spectral_radius_proxies() {
        let p = registry::gauss_conv(0.5, 1.0, &[1.0], &[(0.0, 1.0)], 21).unwrap();
        let t = power_norms(&p, 10, NormMethod::Quadrature).unwrap();
        let roots: Vec<f64> = (1..=10).map(|m| t.r_u(m).powf(1.0 / m as f64)).collect();
        assert!(roots.windows(2).all(|w| w[1] <= w[0] * 1.02));
        assert!(roots[9] <= t.fit_u.beta * 1.02);
        // ρ₁ ≤ √ρ
        assert!(t.radius_proxy(Operator::S) <= t.radius_proxy(Operator::U).sqrt() + 0.02);
    }

    #[test]
    fn non_contractive_kernel_is_rejected() {
        let c = registry::constant(1.2, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        assert!(matches!(power_norms(&c, 5, NormMethod::Analytic), Err(Error::Contractivity { .. })));
        assert!(matches!(power_norms(&c, 1, NormMethod::Analytic), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn feasibility_limits_of_quadrature() {
        let p = registry::gauss_conv(0.3, 1.0, &[1.0], &[(0.0, 1.0), (0.0, 1.0)], 5).unwrap();
        assert!(matches!(power_norms(&p, 3, NormMethod::Quadrature), Err(Error::OracleInfeasible(_))));
        assert!(matches!(power_norms(&ts(), 13, NormMethod::Quadrature), Err(Error::OracleInfeasible(_))));
    }

    #[test]
    fn natural_distance_examples() {
        let p = ts();
        assert_relative_eq!(natural_distance(&p, &[0.2], &[0.7]), 0.5, epsilon = 1e-15);
        assert_eq!(natural_distance(&p, &[0.3], &[0.3]), 0.0);
        let mut custom = p.clone();
        custom.metric_kind = MetricKind::CustomTable;
        assert_relative_eq!(natural_distance(&custom, &[0.1], &[0.4]), 0.3, epsilon = 1e-12);
        assert_eq!(natural_distance(&custom, &[0.4], &[0.4]), 0.0);
        let mut lp = p.clone();
        lp.metric_kind = MetricKind::LogPower { gamma: 1.0, c: 2.0 };
        assert_eq!(natural_distance(&lp, &[0.5], &[0.5]), 0.0);
        assert_relative_eq!(natural_distance(&lp, &[0.0], &[0.01]), 2.0 / 100f64.ln(), max_relative = 1e-12);
    }
}
