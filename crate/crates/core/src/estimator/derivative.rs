use super::solution::{run_terms, term_covariances, TermCovariances};
use super::{EstimateMode, EstimateTable};
use crate::allocation::BudgetAllocation;
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::neumann::TruncationPlan;
use crate::prelude::*;
use crate::problem::ProblemSpec;
use crate::rng::Purpose;

/// Estimates `Y = y′` from `Y = f′ + V[y]`, `V = ∂K/∂t`, truncated as
/// `f′ + Σ_{k=0}^{N} V[S^k f]`. Term `m = k + 1` draws the extra point `ζ`
/// followed by `k` points, so `alloc` must cover `N + 1` terms (see
/// [`crate::allocation::derivative_allocation`]).
pub fn derivative_solve<E: Executor + ?Sized>(
    spec: &ProblemSpec,
    plan: &TruncationPlan,
    alloc: &BudgetAllocation,
    t_grid: &Grid,
    seed: u64,
    exec: &E,
) -> Result<EstimateTable> {
    Ok(inner(spec, plan, alloc, t_grid, seed, exec, false)?.0)
}

pub fn derivative_solve_with_covariance<E: Executor + ?Sized>(
    spec: &ProblemSpec,
    plan: &TruncationPlan,
    alloc: &BudgetAllocation,
    t_grid: &Grid,
    seed: u64,
    exec: &E,
) -> Result<(EstimateTable, TermCovariances)> {
    inner(spec, plan, alloc, t_grid, seed, exec, true)
}

fn inner<E: Executor + ?Sized>(
    spec: &ProblemSpec,
    plan: &TruncationPlan,
    alloc: &BudgetAllocation,
    t_grid: &Grid,
    seed: u64,
    exec: &E,
    track_cov: bool,
) -> Result<(EstimateTable, TermCovariances)> {
    let v = match (&spec.kernel_dt, spec.dim()) {
        (Some(v), 1) => v,
        _ => return Err(Error::UnsupportedDerivative),
    };
    if alloc.n_terms != plan.n_terms + 1 {
        return Err(Error::invalid(format!(
            "derivative allocation covers {} terms, expected N + 1 = {}",
            alloc.n_terms,
            plan.n_terms + 1
        )));
    }
    let terms = run_terms(spec, v, &alloc.counts, t_grid, seed, Purpose::Derivative, exec, track_cov)?;
    let base: Vec<f64> = t_grid.points().map(|t| spec.forcing_derivative(t)).collect();
    let table = super::solution::assemble(t_grid, base, &terms, seed, 1, EstimateMode::Derivative);
    Ok((table, term_covariances(t_grid, &terms)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::derivative_allocation;
    use crate::exec::Sequential;
    use crate::neumann::TruncationSource;
    use crate::problem::{power_norms, registry, NormMethod};

    fn plan(n: usize) -> TruncationPlan {
        TruncationPlan { epsilon: 0.01, n_terms: n, tail_bound: 0.0, source: TruncationSource::FitBased, asymptotic_guess: 0.0 }
    }

    #[test]
    fn constant_kernel_has_zero_derivative() {
        let spec = registry::constant(0.5, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        let pnt = power_norms(&spec, 8, NormMethod::Analytic).unwrap();
        let alloc = derivative_allocation(&pnt, 3, 1000).unwrap();
        let est = derivative_solve(&spec, &plan(3), &alloc, &spec.domain.grid(), 2, &Sequential).unwrap();
        assert!(est.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ts_fixture_mean_is_flat() {
        let spec = registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 11).unwrap();
        let pnt = power_norms(&spec, 10, NormMethod::Analytic).unwrap();
        let alloc = derivative_allocation(&pnt, 6, 400_000).unwrap();
        let est = derivative_solve(&spec, &plan(6), &alloc, &spec.domain.grid(), 8, &Sequential).unwrap();
        for (v, var) in est.values.iter().zip(&est.pointwise_var) {
            assert!((v - 1.5).abs() < 4.0 * var.sqrt() + 1e-3, "{v}");
        }
        // V(t, s) = s does not depend on t, so every grid point agrees.
        assert!(est.values.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn first_term_variance_matches_moments() {
        let spec = registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 11).unwrap();
        let pnt = power_norms(&spec, 4, NormMethod::Analytic).unwrap();
        let alloc = derivative_allocation(&pnt, 1, 200_000).unwrap();
        let (_, c) = derivative_solve_with_covariance(&spec, &plan(1), &alloc, &Grid::from_points_1d(&[0.5]), 6, &Sequential)
            .unwrap();
        let var1 = c.cov[0][0];
        let oracle = 1.0 / 5.0 - 1.0 / 9.0;
        assert!((var1 - oracle).abs() < 0.02 * oracle, "{var1}");
    }

    #[test]
    fn missing_derivative_kernel() {
        let spec = registry::gauss_conv(0.5, 1.0, &[1.0], &[(0.0, 1.0), (0.0, 1.0)], 5).unwrap();
        let alloc = crate::allocation::allocate_from_proxies(&[1.0, 0.25], 10).unwrap();
        assert_eq!(derivative_solve(&spec, &plan(1), &alloc, &spec.domain.grid(), 1, &Sequential), Err(Error::UnsupportedDerivative));
    }
}
