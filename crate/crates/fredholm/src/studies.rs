//! Replicated studies: empirical convergence rates and band coverage.

use fredholm_core::allocation::{derivative_allocation, optimal_allocation};
use fredholm_core::confidence::simulate_sup_quantile;
use fredholm_core::estimator::{
    derivative_solve, estimate_covariance, solve_fredholm_mc, solve_geometric, solve_with_covariance, GeometricOptions,
};
use fredholm_core::neumann::truncated_solution_oracle;
use fredholm_core::{fit_slope, Grid, Sequential};
use serde::Serialize;

use crate::config::{ExperimentConfig, RateMethod};
use crate::error::CliError;
use crate::export::{CoverageRow, RateRow};
use crate::parallel::Pool;
use crate::pipeline::{exact_derivative, exact_solution, sup_diff, Prepared};

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub method: &'static str,
    /// Least-squares slope of `log rmse` against `log n`.
    pub slope: f64,
    pub budgets: Vec<u64>,
    /// Root mean square of the sup-norm error over replications.
    pub rmse: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageSummary {
    pub replications: usize,
    pub covered: usize,
    pub fraction: f64,
    pub nominal: f64,
    pub budget: u64,
    pub mean_half_width: f64,
    pub mean_sup_error: f64,
}

fn method_str(m: RateMethod) -> &'static str {
    match m {
        RateMethod::Solve => "solve",
        RateMethod::Geometric => "geometric",
        RateMethod::Derivative => "derivative",
    }
}

fn missing(what: &str) -> CliError {
    CliError::Config(format!("this problem has no closed-form {what} to measure errors against"))
}

fn reference(cfg: &ExperimentConfig, prep: &Prepared, method: RateMethod, grid: &Grid) -> Result<Vec<f64>, CliError> {
    let spec = &prep.spec;
    match method {
        RateMethod::Solve => match exact_solution(spec, 1.0, grid) {
            Some(y) => Ok(y),
            None => Ok(truncated_solution_oracle(spec, &prep.plan, grid)?),
        },
        RateMethod::Geometric => exact_solution(spec, cfg.lambda, grid).ok_or_else(|| missing("y_lambda")),
        RateMethod::Derivative => exact_derivative(spec, grid).ok_or_else(|| missing("derivative")),
    }
}

/// Sup-norm errors over `cfg.replications` runs at each budget, per method.
/// Replicate `r` at budget index `i` uses seed `seed + (i << 32) + r`.
pub fn rate_study(cfg: &ExperimentConfig, prep: &Prepared, pool: &Pool) -> Result<(Vec<RateRow>, Vec<RateFit>), CliError> {
    let spec = &prep.spec;
    let grid = spec.domain.grid();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &method in &cfg.rate_methods {
        let truth = reference(cfg, prep, method, &grid)?;
        let mut rmse = Vec::with_capacity(cfg.budgets.len());
        for (i, &n) in cfg.budgets.iter().enumerate() {
            let alloc = match method {
                RateMethod::Solve => Some(optimal_allocation(&prep.pnt, prep.plan.n_terms, n)?),
                RateMethod::Derivative => Some(derivative_allocation(&prep.pnt, prep.plan.n_terms, n)?),
                RateMethod::Geometric => None,
            };
            let errs = pool.map(cfg.replications, |r| {
                let seed = cfg.seed.wrapping_add((i as u64) << 32).wrapping_add(r as u64);
                let est = match (method, &alloc) {
                    (RateMethod::Solve, Some(a)) => solve_fredholm_mc(spec, &prep.plan, a, &grid, seed, &Sequential),
                    (RateMethod::Derivative, Some(a)) => derivative_solve(spec, &prep.plan, a, &grid, seed, &Sequential),
                    _ => {
                        let opts = GeometricOptions { lambda: cfg.lambda, outer: cfg.outer, budget: n };
                        solve_geometric(spec, &prep.pnt, opts, &grid, seed, &Sequential)
                    }
                };
                est.map(|e| sup_diff(&e.values, &truth))
            });
            let mut sum = 0.0;
            for (r, e) in errs.into_iter().enumerate() {
                let e = e?;
                sum += e * e;
                rows.push(RateRow { method: method_str(method), n, replication: r, sup_error: e });
            }
            rmse.push((sum / cfg.replications as f64).sqrt());
        }
        let x: Vec<f64> = cfg.budgets.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = rmse.iter().map(|m| m.ln()).collect();
        fits.push(RateFit { method: method_str(method), slope: fit_slope(&x, &y), budgets: cfg.budgets.clone(), rmse });
    }
    Ok((rows, fits))
}

/// Gauss-sim band coverage of the exact solution over `cfg.replications`
/// independent solves at `cfg.budget`, replicate `r` seeded `seed + r`.
pub fn coverage_study(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    pool: &Pool,
) -> Result<(Vec<CoverageRow>, CoverageSummary), CliError> {
    let spec = &prep.spec;
    let grid = spec.domain.grid();
    let cov_grid = spec.domain.with_grid(cfg.covariance_points())?.grid();
    let truth = reference(cfg, prep, RateMethod::Solve, &grid)?;
    let alloc = optimal_allocation(&prep.pnt, prep.plan.n_terms, cfg.budget)?;
    let results = pool.map(cfg.replications, |r| -> Result<CoverageRow, CliError> {
        let seed = cfg.seed.wrapping_add(r as u64);
        let est = solve_fredholm_mc(spec, &prep.plan, &alloc, &grid, seed, &Sequential)?;
        let (_, tc) = solve_with_covariance(spec, &prep.plan, &alloc, &cov_grid, seed, &Sequential)?;
        let cov = estimate_covariance(&alloc, &tc)?;
        let band = simulate_sup_quantile(&cov, cfg.delta, cfg.n_sim, seed, cfg.budget, &Sequential)?;
        Ok(CoverageRow {
            replication: r,
            covered: band.covers(&est.values, &truth),
            sup_error: sup_diff(&est.values, &truth),
            half_width: band.half_width,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let covered = rows.iter().filter(|r| r.covered).count();
    let k = rows.len().max(1) as f64;
    let summary = CoverageSummary {
        replications: rows.len(),
        covered,
        fraction: covered as f64 / k,
        nominal: 1.0 - cfg.delta,
        budget: cfg.budget,
        mean_half_width: rows.iter().map(|r| r.half_width).sum::<f64>() / k,
        mean_sup_error: rows.iter().map(|r| r.sup_error).sum::<f64>() / k,
    };
    Ok((rows, summary))
}
