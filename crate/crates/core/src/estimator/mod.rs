//! Monte-Carlo engines.
//!
//! All estimators follow the dependent-trial principle: one set of random
//! tuples per term is shared by every point of the parameter grid, so the
//! estimate is a random continuous function of `t` rather than a collection
//! of independent numbers.

mod derivative;
mod geometric;
mod integral;
pub(crate) mod moments;
mod solution;

pub use derivative::{derivative_solve, derivative_solve_with_covariance};
pub use geometric::{solve_geometric, GeometricOptions};
pub use integral::{estimate_parametric_integral, estimate_parametric_integral_with_covariance, Integrand};
pub use solution::{estimate_covariance, solve_fredholm_mc, solve_with_covariance, TermCovariances};

use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::prelude::*;
use crate::problem::{Kernel, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    Integral,
    Solution,
    Derivative,
    Geometric,
}

impl EstimateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateMode::Integral => "integral",
            EstimateMode::Solution => "solution",
            EstimateMode::Derivative => "derivative",
            EstimateMode::Geometric => "geometric",
        }
    }
}

/// Output of one estimator run on a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTable {
    pub t_grid: Grid,
    pub values: Vec<f64>,
    /// Plug-in variance of each `values[j]`.
    pub pointwise_var: Vec<f64>,
    /// Row `m − 1` holds the estimate of the `m`-th term on the grid. In
    /// geometric mode row `j` is the `j`-th outer replicate instead.
    pub per_term: Vec<Vec<f64>>,
    /// Draws of `μ` actually consumed.
    pub n_used: u64,
    /// Scalar uniforms consumed, `n_used · dim`.
    pub scalar_draws: u64,
    pub seed: u64,
    pub mode: EstimateMode,
}

impl EstimateTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `max_j |values[j] − reference(t_j)|`.
    pub fn sup_error(&self, reference: impl Fn(&[f64]) -> f64) -> f64 {
        self.t_grid.points().zip(&self.values).map(|(t, v)| (v - reference(t)).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceSource {
    PlugInMc,
    Analytic,
}

impl CovarianceSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CovarianceSource::PlugInMc => "plug-in-mc",
            CovarianceSource::Analytic => "analytic",
        }
    }
}

/// Covariance `Ẑ` of the limiting Gaussian field on a grid, scaled so that
/// `Cov(ŷ(t), ŷ(s)) ≈ Ẑ(t, s) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub t_grid: Grid,
    /// Row-major `len × len`.
    pub z_hat: Vec<f64>,
    pub sigma_plus_sq: f64,
    pub source: CovarianceSource,
}

impl CovarianceModel {
    /// Symmetrises `z`, clips diagonal entries in `[−1e−12, 0)` to zero and
    /// rejects anything more negative.
    pub fn new(t_grid: Grid, mut z: Vec<f64>, source: CovarianceSource) -> Result<Self> {
        let g = t_grid.len();
        if z.len() != g * g {
            return Err(Error::invalid(format!("covariance has {} entries, grid needs {}", z.len(), g * g)));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite covariance entry".into()));
        }
        for j in 0..g {
            for k in j + 1..g {
                let v = 0.5 * (z[j * g + k] + z[k * g + j]);
                z[j * g + k] = v;
                z[k * g + j] = v;
            }
            let d = &mut z[j * g + j];
            if *d < -1e-12 {
                return Err(Error::Degenerate(format!("negative variance {d} at grid point {j}")));
            }
            if *d < 0.0 {
                *d = 0.0;
            }
        }
        let sigma_plus_sq = (0..g).map(|j| z[j * g + j]).fold(0.0, f64::max);
        Ok(CovarianceModel { t_grid, z_hat: z, sigma_plus_sq, source })
    }

    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.z_hat[j * self.len() + k]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.get(j, j)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }
}

/// `K(t, x₁) · K(x₁, x₂) ⋯ K(x_{m−1}, x_m) · f(x_m)` with `xs` holding the
/// `m` points back to back. The `t`-free tail is multiplied first, from the
/// right, so that every grid point sees the same rounding of that tail.
pub fn tensor_integrand(spec: &ProblemSpec, t: &[f64], xs: &[f64]) -> f64 {
    let d = spec.dim();
    let m = xs.len() / d;
    assert!(m >= 1 && xs.len() == m * d, "tensor integrand needs at least one point");
    spec.kernel.as_ref()(t, &xs[..d]) * tail_product(spec, xs)
}

/// `Π_{j<m} K(x_j, x_{j+1}) · f(x_m)`.
pub(crate) fn tail_product(spec: &ProblemSpec, xs: &[f64]) -> f64 {
    let d = spec.dim();
    let m = xs.len() / d;
    let mut p = spec.forcing.as_ref()(&xs[(m - 1) * d..]);
    for j in (0..m - 1).rev() {
        p *= spec.kernel.as_ref()(&xs[j * d..(j + 1) * d], &xs[(j + 1) * d..(j + 2) * d]);
    }
    p
}

/// Evaluates `first(t_j, x₁) · tail` on the whole grid.
pub(crate) fn fill_grid(first: &Kernel, grid: &Grid, xs: &[f64], d: usize, tail: f64, out: &mut [f64]) -> Result<()> {
    let x1 = &xs[..d];
    for (o, t) in out.iter_mut().zip(grid.points()) {
        *o = first.as_ref()(t, x1) * tail;
        if !o.is_finite() {
            return Err(Error::NonFinite { context: "tensor integrand", t: t.to_vec(), x: xs.to_vec() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::registry;
    use approx::assert_relative_eq;

    #[test]
    fn hand_products() {
        let c = registry::constant(0.5, &[1.0], &[(0.0, 1.0)], 11).unwrap();
        assert_eq!(tensor_integrand(&c, &[0.3], &[0.1, 0.7, 0.9]), 0.125);
        let ts = registry::separable_poly(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0], (0.0, 1.0), 11).unwrap();
        assert_relative_eq!(tensor_integrand(&ts, &[1.0], &[0.5, 0.2]), 0.01, epsilon = 1e-15);
        assert_relative_eq!(tensor_integrand(&ts, &[0.5], &[0.4]), 0.08, epsilon = 1e-15);
    }

    #[test]
    fn covariance_model_symmetrises_and_clips() {
        let g = Grid::from_points_1d(&[0.0, 1.0]);
        let z = CovarianceModel::new(g.clone(), vec![-1e-13, 0.2, 0.4, 1.0], CovarianceSource::Analytic).unwrap();
        assert_eq!(z.get(0, 0), 0.0);
        assert_eq!(z.get(0, 1), z.get(1, 0));
        assert_relative_eq!(z.get(0, 1), 0.3, epsilon = 1e-15);
        assert_eq!(z.sigma_plus_sq, 1.0);
        assert!(CovarianceModel::new(g, vec![-1e-6, 0.0, 0.0, 1.0], CovarianceSource::Analytic).is_err());
    }
}
