//! Variance-optimal split of the sampling budget across Neumann terms.
//!
//! Term `m` costs `m` draws of `μ` per replicate and its estimator variance is
//! at most `r_m(U) ||f||² / n(m)`. Minimising `Φ = Σ r_m(U) / n(m)` subject to
//! `B = Σ m n(m) = n` with Lagrange multipliers gives
//! `n(m) = θ(m) n`, `θ(m) = r_m(U)^{1/2} / (R_{1/2}(N) √m)`, rounded as
//! `1 + ⌊θ(m) n⌋`.

use crate::error::{Error, Result};
use crate::prelude::*;
use crate::problem::PowerNormTable;

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetAllocation {
    /// Budget in draws of `μ`.
    pub n_total: u64,
    pub n_terms: usize,
    /// `θ(m)`, index 0 holds `m = 1`.
    pub theta: Vec<f64>,
    /// Replicates `n(m)`.
    pub counts: Vec<u64>,
    /// Realised cost `Σ m n(m)`.
    pub cost_b: u64,
    /// `Σ r_m(U) / n(m)`.
    pub phi_predicted: f64,
    pub r_half: f64,
    pub r_minus_half: f64,
    /// Variance proxies the allocation was computed from.
    pub proxies: Vec<f64>,
}

impl BudgetAllocation {
    /// `Φ` of the unrounded Lagrange solution, `R_{1/2}(N)² / n`.
    pub fn continuous_optimum(&self) -> f64 {
        self.r_half * self.r_half / self.n_total as f64
    }

    pub fn count(&self, m: usize) -> u64 {
        self.counts[m - 1]
    }
}

/// `r_m(U)` for `m = 1..=N`, continued past the table by the fitted bound.
pub fn u_proxies(pnt: &PowerNormTable, n_terms: usize) -> Result<Vec<f64>> {
    if n_terms == 0 {
        return Err(Error::invalid("need at least one term"));
    }
    Ok((1..=n_terms).map(|m| if m <= pnt.m_max { pnt.r_u(m) } else { pnt.fit_u.bound(m) }).collect())
}

/// `R_α(N) = Σ_{k≤N} k^α r_k(U)^{1/2}`.
pub fn r_alpha_sum(pnt: &PowerNormTable, alpha: f64, n_terms: usize) -> Result<f64> {
    Ok(r_alpha_of(&u_proxies(pnt, n_terms)?, alpha))
}

fn r_alpha_of(proxies: &[f64], alpha: f64) -> f64 {
    proxies.iter().enumerate().map(|(i, r)| ((i + 1) as f64).powf(alpha) * r.sqrt()).sum()
}

/// `Φ = Σ r_m / n(m)` for arbitrary counts.
pub fn phi(proxies: &[f64], counts: &[u64]) -> f64 {
    proxies.iter().zip(counts).map(|(r, &n)| r / n as f64).sum()
}

/// `B = Σ m n(m)`.
pub fn cost(counts: &[u64]) -> u64 {
    counts.iter().enumerate().map(|(i, &n)| (i as u64 + 1) * n).sum()
}

/// Smallest admissible budget for `N` terms.
pub fn minimum_budget(n_terms: usize) -> u64 {
    (n_terms * (n_terms + 1) / 2) as u64
}

/// Rounded Lagrange allocation for `N` terms of `pnt`.
pub fn optimal_allocation(pnt: &PowerNormTable, n_terms: usize, n_total: u64) -> Result<BudgetAllocation> {
    pnt.ensure_contractive()?;
    allocate_from_proxies(&u_proxies(pnt, n_terms)?, n_total)
}

/// Allocation for the derivative estimator, whose term `m` draws `m` points
/// and has variance proxy `r_{m−1}(U)` (with `r_0 = 1`), for `m = 1..=N+1`.
pub fn derivative_allocation(pnt: &PowerNormTable, n_terms: usize, n_total: u64) -> Result<BudgetAllocation> {
    pnt.ensure_contractive()?;
    let mut proxies = Vec::with_capacity(n_terms + 1);
    proxies.push(1.0);
    proxies.extend(u_proxies(pnt, n_terms)?);
    allocate_from_proxies(&proxies, n_total)
}

/// Rounded Lagrange allocation for arbitrary positive variance proxies.
pub fn allocate_from_proxies(proxies: &[f64], n_total: u64) -> Result<BudgetAllocation> {
    let n_terms = proxies.len();
    if n_terms == 0 || proxies.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("variance proxies must be positive and finite"));
    }
    let required = minimum_budget(n_terms);
    if n_total < required {
        return Err(Error::Budget { required, given: n_total });
    }
    let r_half = r_alpha_of(proxies, 0.5);
    let r_minus_half = r_alpha_of(proxies, -0.5);
    let theta: Vec<f64> =
        proxies.iter().enumerate().map(|(i, r)| r.sqrt() / (r_half * ((i + 1) as f64).sqrt())).collect();
    let counts: Vec<u64> = theta.iter().map(|th| 1 + (th * n_total as f64).floor() as u64).collect();
    Ok(BudgetAllocation {
        n_total,
        n_terms,
        cost_b: cost(&counts),
        phi_predicted: phi(proxies, &counts),
        theta,
        counts,
        r_half,
        r_minus_half,
        proxies: proxies.to_vec(),
    })
}

/// Equal replicate counts `n / Σ m`, the baseline the optimum is compared with.
pub fn uniform_allocation(n_terms: usize, n_total: u64) -> Result<Vec<u64>> {
    let required = minimum_budget(n_terms);
    if n_total < required {
        return Err(Error::Budget { required, given: n_total });
    }
    Ok(vec![n_total / required; n_terms])
}

/// Bracket `||f||² R_{1/2} R_{−1/2} (1/n ± C/n²)` with the rounding-loss
/// constant `C = N(N+1)/2 · max_m r_m(U)^{−1/2} · R_{1/2}` over the finite sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBracket {
    pub upper: f64,
    pub lower: f64,
    pub rounding_constant: f64,
}

pub fn variance_bracket(pnt: &PowerNormTable, n_terms: usize, n_total: u64, f_norm: f64) -> Result<VarianceBracket> {
    let r_half = r_alpha_sum(pnt, 0.5, n_terms)?;
    let r_minus_half = r_alpha_sum(pnt, -0.5, n_terms)?;
    let max_inv_sqrt = u_proxies(pnt, n_terms)?.iter().map(|r| 1.0 / r.sqrt()).fold(0.0, f64::max);
    let c = minimum_budget(n_terms) as f64 * max_inv_sqrt * r_half;
    let n = n_total as f64;
    let scale = f_norm * f_norm * r_half * r_minus_half;
    Ok(VarianceBracket { upper: scale * (1.0 / n + c / (n * n)), lower: scale * (1.0 / n - c / (n * n)), rounding_constant: c })
}
