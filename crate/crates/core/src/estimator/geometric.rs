use super::moments::{accumulate, Moments, StreamKey};
use super::solution::stream_index;
use super::{fill_grid, tail_product, EstimateMode, EstimateTable};
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::prelude::*;
use crate::problem::{PowerNormTable, ProblemSpec};
use crate::rng::{substream, uniform, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricOptions {
    /// `λ` in `y = f + λ S[y]`.
    pub lambda: f64,
    /// Number of outer draws of `τ`; `⌈√budget⌉` when `None`.
    pub outer: Option<usize>,
    /// Target scalar budget in draws of `μ`.
    pub budget: u64,
}

/// Unbiased estimate of `y_λ = Σ_m λ^m S^m[f]` through
/// `(1 − λ) y_λ = E S^τ[f]`, `P(τ = m) = (1 − λ) λ^m`.
///
/// Each of the `M` outer replicates draws `τ_j` and averages `n = budget /
/// (M E[τ])` tuples of length `τ_j` on the grid; `τ_j = 0` contributes `f`.
pub fn solve_geometric<E: Executor + ?Sized>(
    spec: &ProblemSpec,
    pnt: &PowerNormTable,
    opts: GeometricOptions,
    t_grid: &Grid,
    seed: u64,
    exec: &E,
) -> Result<EstimateTable> {
    let lambda = opts.lambda;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid("lambda must lie in (0, 1)"));
    }
    let beta1 = pnt.fit_s.beta;
    if lambda * beta1 >= 1.0 {
        return Err(Error::Contractivity { which: crate::error::Operator::S, beta: lambda * beta1 });
    }
    let m_outer = opts.outer.unwrap_or_else(|| (opts.budget as f64).sqrt().ceil() as usize);
    if m_outer < 2 {
        return Err(Error::invalid("geometric method needs M >= 2"));
    }
    let d = spec.dim();
    if t_grid.dim() != d {
        return Err(Error::invalid("grid dimension does not match the domain"));
    }
    let mean_tau = lambda / (1.0 - lambda);
    let n_inner = ((opts.budget as f64 / (m_outer as f64 * mean_tau)).floor() as u64).max(1);

    let ln_lambda = lambda.ln();
    let taus: Vec<usize> = (0..m_outer)
        .map(|j| {
            let mut rng = substream(seed, Purpose::GeometricPower, 0, j as u64, 1);
            let u = 1.0 - uniform(&mut rng);
            (u.ln() / ln_lambda).floor() as usize
        })
        .collect();
    let realized: u64 = taus.iter().map(|&t| t as u64 * n_inner).sum();
    if realized > 2 * opts.budget {
        return Err(Error::CostExceeded { realized, budget: opts.budget });
    }

    let forcing: Vec<f64> = t_grid.points().map(|t| spec.forcing.as_ref()(t)).collect();
    let rows = exec.run(m_outer, |j| -> Result<Vec<f64>> {
        let tau = taus[j];
        if tau == 0 {
            return Ok(forcing.clone());
        }
        let key = StreamKey {
            seed,
            purpose: Purpose::GeometricTerm,
            index: stream_index(spec, j),
            draws_per_replicate: (tau * d) as u64,
        };
        let mom: Moments = accumulate(&Sequential, key, n_inner, t_grid.len(), false, |rng, buf| {
            let mut xs = vec![0.0; tau * d];
            for p in xs.chunks_mut(d) {
                spec.mu.sample_into(rng, p);
            }
            fill_grid(&spec.kernel, t_grid, &xs, d, tail_product(spec, &xs), buf)
        })?;
        Ok(mom.mean)
    });
    let mut per_term = Vec::with_capacity(m_outer);
    for r in rows {
        per_term.push(r?);
    }

    let scale = 1.0 / (1.0 - lambda);
    let mut outer = Moments::new(t_grid.len(), false);
    let mut scaled = vec![0.0; t_grid.len()];
    for row in &per_term {
        for (s, v) in scaled.iter_mut().zip(row) {
            *s = v * scale;
        }
        outer.push(&scaled);
    }
    Ok(EstimateTable {
        t_grid: t_grid.clone(),
        values: outer.mean.clone(),
        pointwise_var: outer.variance().iter().map(|v| v / m_outer as f64).collect(),
        per_term,
        n_used: realized,
        scalar_draws: realized * d as u64,
        seed,
        mode: EstimateMode::Geometric,
    })
}
