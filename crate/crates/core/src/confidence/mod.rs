//! Uniform-norm confidence bands `sup_t |ŷ(t) − y(t)| ≤ u(δ)/√n`.

mod entropy;
mod gauss;
mod nonasymptotic;
mod psi;

pub use entropy::entropy_h;
pub use gauss::{cholesky_with_jitter, simulate_sup_quantile, simulate_sups, tail_shape_report, TailFit, TailOptions};
pub use nonasymptotic::{entropy_integral, nonasymptotic_band, tail_bound, NonasymptoticReport};
pub use psi::{default_p_grid, natural_psi_from_r, v_star, PsiFunction, PsiKind, C0};

use crate::estimator::CovarianceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandMethod {
    GaussSim,
    NonasymptoticPsi,
}

impl BandMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BandMethod::GaussSim => "gauss-sim",
            BandMethod::NonasymptoticPsi => "nonasymptotic-psi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand {
    pub delta: f64,
    pub u_delta: f64,
    /// Sample size the band is scaled for.
    pub n: u64,
    /// `u_delta / √n`, the same at every grid point.
    pub half_width: f64,
    pub method: BandMethod,
    pub n_sim: Option<usize>,
    pub sigma_plus_sq: f64,
    /// Ridge added before factorisation (gauss-sim only).
    pub ridge: f64,
    pub covariance: Option<CovarianceModel>,
    pub kappa_fit: Option<f64>,
    pub c_fit: Option<f64>,
}

impl ConfidenceBand {
    pub fn reliability(&self) -> f64 {
        1.0 - self.delta
    }

    /// Same `u(δ)` rescaled to sample size `n`.
    pub fn rescaled(&self, n: u64) -> Self {
        let mut b = self.clone();
        b.n = n;
        b.half_width = self.u_delta / (n as f64).sqrt();
        b
    }

    /// Whether `|estimate − truth| ≤ half_width` at every grid point.
    pub fn covers(&self, estimate: &[f64], truth: &[f64]) -> bool {
        estimate.iter().zip(truth).all(|(e, t)| (e - t).abs() <= self.half_width)
    }
}

pub(crate) fn check_delta(delta: f64) -> crate::Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(crate::Error::invalid("delta must lie in (0, 1)"))
    }
}
