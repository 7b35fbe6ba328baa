//! Truncation of the Neumann series and the deterministic quadrature oracle.
//!
//! The solution is `y = Σ_{m≥0} S^m[f]`. Keeping the terms `m ≤ N` leaves a tail
//! bounded by `||f|| Σ_{m>N} r_m(S) ≤ ||f|| C Σ_{m>N} m^Δ β^m`; `N(ε)` is the
//! smallest level that pushes this bound below `ε`.

use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::prelude::*;
use crate::problem::{DecayFit, PowerNormTable, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationSource {
    /// Tail of the fitted `C m^Δ β^m` bound on `r_m(S)`.
    FitBased,
    /// Tail of `||S||^m`.
    NormProduct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPlan {
    pub epsilon: f64,
    /// Number of Neumann terms `N` kept after `f`.
    pub n_terms: usize,
    /// Certified bound on `Σ_{m>N} ||S^m[f]||`.
    pub tail_bound: f64,
    pub source: TruncationSource,
    /// The small-ε asymptotic level, kept for reference only.
    pub asymptotic_guess: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::invalid("epsilon must lie in (0, 0.5)"));
    }
    Ok(())
}

/// `f_norm · Σ_{m>N} C m^Δ β^m`, summed directly until the terms fall below
/// `1e−18` past the maximum of `m^Δ β^m`.
pub fn fitted_tail(fit: &DecayFit, f_norm: f64, n: usize) -> f64 {
    if f_norm == 0.0 || fit.c == 0.0 || fit.beta == 0.0 {
        return 0.0;
    }
    let peak = if fit.delta > 0.0 { fit.delta / fit.beta.ln().abs() } else { 0.0 };
    let mut sum = 0.0;
    let mut m = n + 1;
    loop {
        let term = f_norm * fit.bound(m);
        sum += term;
        if term < 1e-18 && m as f64 > peak {
            break;
        }
        m += 1;
    }
    sum
}

/// Smallest `N ≥ Δ/|log β|` whose fitted tail is at most `ε`.
pub fn choose_truncation(pnt: &PowerNormTable, f_norm: f64, epsilon: f64) -> Result<TruncationPlan> {
    check_epsilon(epsilon)?;
    let fit = pnt.fit_s;
    if !(fit.beta < 1.0) {
        return Err(Error::Contractivity { which: crate::error::Operator::S, beta: fit.beta });
    }
    let log_beta = fit.beta.ln().abs();
    let lower = if fit.delta > 0.0 { (fit.delta / log_beta).ceil() as usize } else { 0 }.max(1);
    let eps1 = epsilon / (fit.c * f_norm).max(f64::MIN_POSITIVE);
    let l = (fit.c * log_beta / eps1).ln();
    let asymptotic_guess = l + fit.delta * (l / log_beta);
    let mut n = lower;
    loop {
        let tail = fitted_tail(&fit, f_norm, n);
        if tail <= epsilon {
            return Ok(TruncationPlan {
                epsilon,
                n_terms: n,
                tail_bound: tail,
                source: TruncationSource::FitBased,
                asymptotic_guess,
            });
        }
        n += 1;
    }
}

/// Truncation from `||S|| < 1` alone: tail `||f|| ||S||^{N+1} / (1 − ||S||)`.
pub fn choose_truncation_norm_product(norm_s: f64, f_norm: f64, epsilon: f64) -> Result<TruncationPlan> {
    check_epsilon(epsilon)?;
    if !(norm_s < 1.0) {
        return Err(Error::Contractivity { which: crate::error::Operator::S, beta: norm_s });
    }
    let tail = |n: usize| f_norm * norm_s.powi(n as i32 + 1) / (1.0 - norm_s);
    let mut n = 1;
    while tail(n) > epsilon {
        n += 1;
    }
    Ok(TruncationPlan {
        epsilon,
        n_terms: n,
        tail_bound: tail(n),
        source: TruncationSource::NormProduct,
        asymptotic_guess: (epsilon / f_norm.max(f64::MIN_POSITIVE)).ln() / norm_s.ln(),
    })
}

/// Largest power the quadrature oracle evaluates.
pub const ORACLE_MAX_POWER: usize = 12;

/// `S^m[f]` for `m = 0..=n_max` on `t_grid` by iterated midpoint quadrature.
/// Row `m` holds `S^m[f](t_j)`.
pub fn oracle_powers(spec: &ProblemSpec, n_max: usize, t_grid: &Grid) -> Result<Vec<Vec<f64>>> {
    if n_max > ORACLE_MAX_POWER {
        return Err(Error::OracleInfeasible(format!("power {n_max} exceeds {ORACLE_MAX_POWER}")));
    }
    if n_max > 1 && spec.dim() > 1 {
        return Err(Error::OracleInfeasible(String::from("powers above 1 need a 1-D domain")));
    }
    if t_grid.dim() != spec.dim() {
        return Err(Error::invalid("grid dimension differs from the domain"));
    }
    let (nodes, w) = spec.mu.quadrature_nodes(spec.quadrature_nodes);
    let f_at = |p: &[f64]| -> Result<f64> {
        let v = (spec.forcing)(p);
        if !v.is_finite() {
            return Err(Error::NonFinite { context: "forcing", t: p.to_vec(), x: Vec::new() });
        }
        Ok(v)
    };
    let mut rows = Vec::with_capacity(n_max + 1);
    rows.push(t_grid.points().map(f_at).collect::<Result<Vec<f64>>>()?);
    if n_max == 0 {
        return Ok(rows);
    }
    // out[t] = Σ_j w K(t, x_j) g_j
    let apply = |g: &[f64]| -> Result<Vec<f64>> {
        t_grid
            .points()
            .map(|t| {
                let mut acc = 0.0;
                for (x, &gj) in nodes.points().zip(g) {
                    let k = (spec.kernel)(t, x);
                    if !k.is_finite() {
                        return Err(Error::NonFinite { context: "kernel", t: t.to_vec(), x: x.to_vec() });
                    }
                    acc += k * gj;
                }
                Ok(acc * w)
            })
            .collect()
    };
    let mut g: Vec<f64> = nodes.points().map(f_at).collect::<Result<_>>()?;
    rows.push(apply(&g)?);
    if n_max > 1 {
        // row-vector form: g ← W K g == (gᵀ W Kᵀ)ᵀ
        let mat = crate::problem::norms::kernel_matrix_transposed(spec, &nodes)?;
        for _ in 2..=n_max {
            g = crate::problem::norms::row_times(&g, &mat, w);
            rows.push(apply(&g)?);
        }
    }
    Ok(rows)
}

/// `S^m[f]` on `t_grid`.
pub fn apply_power_quadrature(spec: &ProblemSpec, m: usize, t_grid: &Grid) -> Result<Vec<f64>> {
    let mut rows = oracle_powers(spec, m, t_grid)?;
    Ok(rows.pop().unwrap_or_default())
}

/// `y^(N) = f + Σ_{m=1}^N S^m[f]` on `t_grid`.
pub fn truncated_solution_oracle(spec: &ProblemSpec, plan: &TruncationPlan, t_grid: &Grid) -> Result<Vec<f64>> {
    let rows = oracle_powers(spec, plan.n_terms, t_grid)?;
    let mut y = rows[0].clone();
    for row in &rows[1..] {
        for (a, b) in y.iter_mut().zip(row) {
            *a += b;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{power_norms, registry, Function, NormMethod};
    use approx::assert_relative_eq;

    fn table(beta: f64, c: f64) -> PowerNormTable {
        let r: Vec<f64> = (1..=8).map(|m| c * beta.powi(m)).collect();
        PowerNormTable::from_sequences(r.clone(), r.iter().map(|v| v * v).collect(), NormMethod::Analytic).unwrap()
    }

    #[test]
    fn geometric_tail_half() {
        let plan = choose_truncation(&table(0.5, 1.0), 1.0, 0.01).unwrap();
        // Σ_{m>N} 2^{-m} = 2^{-N}
        assert_eq!(plan.n_terms, 7);
        assert_relative_eq!(plan.tail_bound, 2f64.powi(-7), max_relative = 1e-12);
        assert!(matches!(choose_truncation(&table(0.5, 1.0), 1.0, 0.6), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn geometric_tail_third() {
        // brute-force oracle: Σ_{m>N} 3^{-m} = 3^{-N}/2, first ≤ 0.01 at N = 4
        let oracle = (1..20).find(|&n| (n + 1..200).map(|m| 3f64.powi(-m)).sum::<f64>() <= 0.01).unwrap();
        assert_eq!(oracle, 4);
        let plan = choose_truncation(&table(1.0 / 3.0, 1.0), 1.0, 0.01).unwrap();
        assert_eq!(plan.n_terms as i32, oracle);
        // the t·s kernel itself has r_m(S) = 1.5 · 3^{-m}
        let ts = registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 11).unwrap();
        let pnt = power_norms(&ts, 8, NormMethod::Analytic).unwrap();
        let plan = choose_truncation(&pnt, ts.f_norm, 0.01).unwrap();
        let oracle = (1..20).find(|&n| (n + 1..200).map(|m| 1.5 * 3f64.powi(-m)).sum::<f64>() <= 0.01).unwrap();
        assert_eq!(plan.n_terms as i32, oracle);
    }

    #[test]
    fn tail_bound_is_monotone_and_respects_peak() {
        let fit = DecayFit { c: 2.0, delta: 3.0, beta: 0.6 };
        let tails: Vec<f64> = (1..30).map(|n| fitted_tail(&fit, 1.0, n)).collect();
        assert!(tails.windows(2).all(|w| w[1] < w[0]));
        let r: Vec<f64> = (1..=10).map(|m| fit.bound(m)).collect();
        let pnt = PowerNormTable::from_sequences(r.clone(), r, NormMethod::Analytic).unwrap();
        let plan = choose_truncation(&pnt, 1.0, 0.1).unwrap();
        assert!(plan.n_terms as f64 >= pnt.fit_s.delta / pnt.fit_s.beta.ln().abs());
        assert!(plan.tail_bound <= 0.1);
    }

    #[test]
    fn norm_product_route() {
        let plan = choose_truncation_norm_product(0.5, 1.0, 0.01).unwrap();
        // 0.5^{N+1} / 0.5 = 0.5^N
        assert_eq!(plan.n_terms, 7);
    }

    fn grid() -> Grid {
        Grid::from_points_1d(&[0.0, 0.25, 0.5, 1.0])
    }

    #[test]
    fn quadrature_powers_of_fixtures() {
        let c = registry::constant(0.5, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        for v in apply_power_quadrature(&c, 3, &grid()).unwrap() {
            assert_relative_eq!(v, 0.125, epsilon = 1e-14);
        }
        let ts = registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 11).unwrap();
        let s1 = apply_power_quadrature(&ts, 1, &grid()).unwrap();
        let s2 = apply_power_quadrature(&ts, 2, &grid()).unwrap();
        for (j, &t) in [0.0, 0.25, 0.5, 1.0].iter().enumerate() {
            assert_relative_eq!(s1[j], t / 3.0, epsilon = 1e-6);
            assert_relative_eq!(s2[j], t / 9.0, epsilon = 1e-6);
        }
        assert!(matches!(apply_power_quadrature(&ts, 13, &grid()), Err(Error::OracleInfeasible(_))));
        let two_d = registry::constant(0.5, &[1.0], &[(0.0, 1.0), (0.0, 1.0)], 3).unwrap();
        let g2 = two_d.domain.grid();
        assert!(matches!(apply_power_quadrature(&two_d, 2, &g2), Err(Error::OracleInfeasible(_))));
    }

    #[test]
    fn truncated_solutions() {
        let c = registry::constant(0.5, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        let plan = TruncationPlan {
            epsilon: 0.01,
            n_terms: 7,
            tail_bound: 0.0,
            source: TruncationSource::FitBased,
            asymptotic_guess: 0.0,
        };
        for v in truncated_solution_oracle(&c, &plan, &grid()).unwrap() {
            assert_relative_eq!(v, 2.0 - 2f64.powi(-7), epsilon = 1e-13);
        }
        let ts = registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 11).unwrap();
        let plan5 = TruncationPlan { n_terms: 5, ..plan };
        let y = truncated_solution_oracle(&ts, &plan5, &grid()).unwrap();
        for (j, &t) in [0.0, 0.25, 0.5, 1.0].iter().enumerate() {
            assert_relative_eq!(y[j], t * (1.0 - 3f64.powi(-6)) / (2.0 / 3.0), epsilon = 1e-6);
        }
        let zero = ts.with_forcing(Arc::new(|_t: &[f64]| 0.0), None).unwrap();
        assert!(truncated_solution_oracle(&zero, &plan5, &grid()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_is_linear() {
        let p = registry::gauss_conv(0.5, 2.0, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        let plan = TruncationPlan {
            epsilon: 0.01,
            n_terms: 4,
            tail_bound: 0.0,
            source: TruncationSource::FitBased,
            asymptotic_guess: 0.0,
        };
        let f1: Function = Arc::new(|t: &[f64]| t[0].sin());
        let f2: Function = Arc::new(|t: &[f64]| 1.0 - t[0] * t[0]);
        let (a, b) = (f1.clone(), f2.clone());
        let f12: Function = Arc::new(move |t: &[f64]| a(t) + b(t));
        let g = grid();
        let y1 = truncated_solution_oracle(&p.with_forcing(f1, None).unwrap(), &plan, &g).unwrap();
        let y2 = truncated_solution_oracle(&p.with_forcing(f2, None).unwrap(), &plan, &g).unwrap();
        let y12 = truncated_solution_oracle(&p.with_forcing(f12, None).unwrap(), &plan, &g).unwrap();
        for j in 0..g.len() {
            assert!((y12[j] - y1[j] - y2[j]).abs() < 1e-12);
        }
    }
}
