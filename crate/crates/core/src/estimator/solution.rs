use super::moments::{accumulate, Moments, StreamKey};
use super::{fill_grid, tail_product, CovarianceModel, CovarianceSource, EstimateMode, EstimateTable};
use crate::allocation::BudgetAllocation;
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::neumann::TruncationPlan;
use crate::prelude::*;
use crate::problem::{Kernel, ProblemSpec};
use crate::rng::Purpose;

/// Per-term sample covariances kept by a solve, enough to form `Ẑ` later.
#[derive(Debug, Clone, PartialEq)]
pub struct TermCovariances {
    pub t_grid: Grid,
    /// Replicates per term.
    pub counts: Vec<u64>,
    /// Row-major `len × len` sample covariance of the term-`m` integrand.
    pub cov: Vec<Vec<f64>>,
}

/// Index of the stream for term `m`, mixed with the sampler's stream id.
pub(crate) fn stream_index(spec: &ProblemSpec, m: usize) -> u64 {
    (spec.mu.seed_stream_id() << 24) ^ m as u64
}

/// Runs term `m = 1..=counts.len()` with tuples of length `m`, the first
/// factor being `first(t, x₁)`.
pub(crate) fn run_terms<E: Executor + ?Sized>(
    spec: &ProblemSpec,
    first: &Kernel,
    counts: &[u64],
    t_grid: &Grid,
    seed: u64,
    purpose: Purpose,
    exec: &E,
    track_cov: bool,
) -> Result<Vec<Moments>> {
    let d = spec.dim();
    if t_grid.dim() != d {
        return Err(Error::invalid(format!("grid dimension {} does not match the domain ({d})", t_grid.dim())));
    }
    let mut out = Vec::with_capacity(counts.len());
    for (i, &n) in counts.iter().enumerate() {
        let m = i + 1;
        let key = StreamKey { seed, purpose, index: stream_index(spec, m), draws_per_replicate: (m * d) as u64 };
        let mom = accumulate(exec, key, n, t_grid.len(), track_cov, |rng, buf| {
            let mut xs = vec![0.0; m * d];
            for p in xs.chunks_mut(d) {
                spec.mu.sample_into(rng, p);
            }
            let tail = tail_product(spec, &xs);
            if !tail.is_finite() {
                return Err(Error::NonFinite { context: "tensor integrand", t: Vec::new(), x: xs });
            }
            fill_grid(first, t_grid, &xs, d, tail, buf)
        })?;
        out.push(mom);
    }
    Ok(out)
}

/// Assembles `base + Σ_m mean_m` and `Σ_m var_m / n(m)`.
pub(crate) fn assemble(
    t_grid: &Grid,
    base: Vec<f64>,
    terms: &[Moments],
    seed: u64,
    dim: usize,
    mode: EstimateMode,
) -> EstimateTable {
    let mut values = base;
    let mut pointwise_var = vec![0.0; t_grid.len()];
    let mut per_term = Vec::with_capacity(terms.len());
    let mut n_used = 0;
    for (i, t) in terms.iter().enumerate() {
        for (v, m) in values.iter_mut().zip(&t.mean) {
            *v += m;
        }
        for (pv, s) in pointwise_var.iter_mut().zip(t.variance()) {
            *pv += s / t.n as f64;
        }
        per_term.push(t.mean.clone());
        n_used += (i as u64 + 1) * t.n;
    }
    EstimateTable {
        t_grid: t_grid.clone(),
        values,
        pointwise_var,
        per_term,
        n_used,
        scalar_draws: n_used * dim as u64,
        seed,
        mode,
    }
}

fn check_alloc(alloc: &BudgetAllocation, want: usize) -> Result<()> {
    if alloc.n_terms != want || alloc.counts.len() != want {
        return Err(Error::invalid(format!("allocation covers {} terms, expected {want}", alloc.n_terms)));
    }
    Ok(())
}

fn solve_inner<E: Executor + ?Sized>(
    spec: &ProblemSpec,
    plan: &TruncationPlan,
    alloc: &BudgetAllocation,
    t_grid: &Grid,
    seed: u64,
    exec: &E,
    track_cov: bool,
) -> Result<(EstimateTable, Vec<Moments>)> {
    check_alloc(alloc, plan.n_terms)?;
    let terms = run_terms(spec, &spec.kernel, &alloc.counts, t_grid, seed, Purpose::NeumannTerm, exec, track_cov)?;
    let base: Vec<f64> = t_grid.points().map(|t| spec.forcing.as_ref()(t)).collect();
    Ok((assemble(t_grid, base, &terms, seed, spec.dim(), EstimateMode::Solution), terms))
}

/// Truncated-Neumann solution `ŷ = f + Σ_{m≤N} Ŝ^m_{n(m)}[f]` on `t_grid`.
pub fn solve_fredholm_mc<E: Executor + ?Sized>(
    spec: &ProblemSpec,
    plan: &TruncationPlan,
    alloc: &BudgetAllocation,
    t_grid: &Grid,
    seed: u64,
    exec: &E,
) -> Result<EstimateTable> {
    Ok(solve_inner(spec, plan, alloc, t_grid, seed, exec, false)?.0)
}

/// As [`solve_fredholm_mc`], keeping the streaming co-moments of every term.
/// The estimate is bit-identical to the one without co-moments.
pub fn solve_with_covariance<E: Executor + ?Sized>(
    spec: &ProblemSpec,
    plan: &TruncationPlan,
    alloc: &BudgetAllocation,
    t_grid: &Grid,
    seed: u64,
    exec: &E,
) -> Result<(EstimateTable, TermCovariances)> {
    let (table, terms) = solve_inner(spec, plan, alloc, t_grid, seed, exec, true)?;
    Ok((table, term_covariances(t_grid, &terms)))
}

pub(crate) fn term_covariances(t_grid: &Grid, terms: &[Moments]) -> TermCovariances {
    TermCovariances {
        t_grid: t_grid.clone(),
        counts: terms.iter().map(|t| t.n).collect(),
        cov: terms.iter().map(|t| t.covariance().unwrap_or_default()).collect(),
    }
}

/// `Ẑ(t_j, t_k) = Σ_m ĉov_m(t_j, t_k) / θ(m)`.
pub fn estimate_covariance(alloc: &BudgetAllocation, samples: &TermCovariances) -> Result<CovarianceModel> {
    if alloc.theta.len() != samples.cov.len() {
        return Err(Error::invalid("allocation and stored moments disagree on the number of terms"));
    }
    if let Some(m) = samples.counts.iter().position(|&n| n < 2) {
        return Err(Error::Degenerate(format!("term {} has fewer than 2 replicates", m + 1)));
    }
    let g = samples.t_grid.len();
    let mut z = vec![0.0; g * g];
    for (c, th) in samples.cov.iter().zip(&alloc.theta) {
        if c.len() != g * g {
            return Err(Error::invalid("stored moments do not cover the grid"));
        }
        for (zi, ci) in z.iter_mut().zip(c) {
            *zi += ci / th;
        }
    }
    CovarianceModel::new(samples.t_grid.clone(), z, CovarianceSource::PlugInMc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{allocate_from_proxies, optimal_allocation};
    use crate::exec::Sequential;
    use crate::neumann::TruncationSource;
    use crate::problem::{power_norms, registry, NormMethod};
    use approx::assert_relative_eq;

    fn plan(n: usize) -> TruncationPlan {
        TruncationPlan { epsilon: 0.01, n_terms: n, tail_bound: 0.0, source: TruncationSource::FitBased, asymptotic_guess: 0.0 }
    }

    fn ts() -> ProblemSpec {
        registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 11).unwrap()
    }

    #[test]
    fn constant_kernel_is_exact() {
        let spec = registry::constant(0.5, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        let pnt = power_norms(&spec, 8, NormMethod::Analytic).unwrap();
        let alloc = optimal_allocation(&pnt, 7, 1000).unwrap();
        let grid = spec.domain.grid();
        let (est, cov) = solve_with_covariance(&spec, &plan(7), &alloc, &grid, 3, &Sequential).unwrap();
        assert!(est.values.iter().all(|&v| v == 2.0 - 2f64.powi(-7)));
        assert!(est.pointwise_var.iter().all(|&v| v == 0.0));
        let z = estimate_covariance(&alloc, &cov).unwrap();
        assert!(z.z_hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let spec = registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0], (0.0, 1.0), 11).unwrap();
        let alloc = allocate_from_proxies(&[1.0 / 3.0, 1.0 / 15.0], 500).unwrap();
        let est = solve_fredholm_mc(&spec, &plan(2), &alloc, &spec.domain.grid(), 1, &Sequential).unwrap();
        assert!(est.values.iter().all(|&v| v == 0.0));
        assert!(est.pointwise_var.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruction_identity() {
        let spec = ts();
        let alloc = allocate_from_proxies(&[1.0 / 3.0, 1.0 / 15.0, 1.0 / 75.0], 3000).unwrap();
        let grid = spec.domain.grid();
        let est = solve_fredholm_mc(&spec, &plan(3), &alloc, &grid, 9, &Sequential).unwrap();
        for (j, t) in grid.points().enumerate() {
            let mut v = t[0];
            for row in &est.per_term {
                v += row[j];
            }
            assert_eq!(v, est.values[j]);
        }
        assert_eq!(est.n_used, alloc.cost_b);
    }

    #[test]
    fn single_term_covariance_matches_moment_oracle() {
        let spec = ts();
        let alloc = allocate_from_proxies(&[1.0 / 3.0], 200_000).unwrap();
        let grid = Grid::from_points_1d(&[0.5, 1.0]);
        let (_, c) = solve_with_covariance(&spec, &plan(1), &alloc, &grid, 5, &Sequential).unwrap();
        let z = estimate_covariance(&alloc, &c).unwrap();
        let oracle = 1.0 / 5.0 - 1.0 / 9.0;
        assert_relative_eq!(z.get(1, 1), oracle, max_relative = 0.02);
        assert_relative_eq!(z.get(0, 1), 0.5 * oracle, max_relative = 0.02);
        assert_eq!(z.get(0, 1), z.get(1, 0));
    }

    #[test]
    fn grid_independent_draws() {
        let spec = ts();
        let alloc = allocate_from_proxies(&[1.0 / 3.0, 1.0 / 15.0], 2000).unwrap();
        let a = solve_fredholm_mc(&spec, &plan(2), &alloc, &Grid::from_points_1d(&[0.0, 0.25, 1.0]), 4, &Sequential).unwrap();
        let b = solve_fredholm_mc(&spec, &plan(2), &alloc, &Grid::from_points_1d(&[0.25, 0.6, 0.9, 1.0]), 4, &Sequential).unwrap();
        for m in 0..2 {
            assert_eq!(a.per_term[m][1], b.per_term[m][0]);
            assert_eq!(a.per_term[m][2], b.per_term[m][3]);
        }
    }

    #[test]
    fn too_few_replicates_refused() {
        let spec = ts();
        let alloc = allocate_from_proxies(&[1.0 / 3.0, 1e-12], 3).unwrap();
        let (_, c) = solve_with_covariance(&spec, &plan(2), &alloc, &spec.domain.grid(), 1, &Sequential).unwrap();
        assert!(matches!(estimate_covariance(&alloc, &c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mismatched_allocation_rejected() {
        let spec = ts();
        let alloc = allocate_from_proxies(&[1.0 / 3.0], 30).unwrap();
        assert!(solve_fredholm_mc(&spec, &plan(2), &alloc, &spec.domain.grid(), 1, &Sequential).is_err());
    }
}
