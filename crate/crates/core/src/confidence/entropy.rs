use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::problem::MetricKind;

/// `log ⌈L / (2r)⌉` without overflowing for tiny `r`.
fn log_cells(side: f64, log_r: f64) -> f64 {
    let log_ratio = side.ln() - core::f64::consts::LN_2 - log_r;
    if log_ratio > 30.0 {
        log_ratio
    } else {
        let cells = log_ratio.exp();
        (cells * (1.0 - 1e-12)).ceil().max(1.0).ln()
    }
}

/// Metric entropy `H = log N(T, d, ε)` of the box with the covering count
/// `Π_i ⌈L_i / (2r)⌉` by sup-norm cubes of half-side `r`, where `r` is the
/// coordinate radius at which `d` reaches `ε`.
pub fn entropy_h(domain: &DomainSpec, metric: &MetricKind, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("entropy needs eps > 0"));
    }
    match log_radius(metric, eps)? {
        None => Ok(0.0),
        Some(log_r) => Ok(domain.side_lengths().iter().map(|&l| log_cells(l, log_r)).sum()),
    }
}

/// `log r` with `d(t, t + r) = eps`; `None` when the metric vanishes.
pub(crate) fn log_radius(metric: &MetricKind, eps: f64) -> Result<Option<f64>> {
    match *metric {
        MetricKind::Holder { c, .. } | MetricKind::LogPower { c, .. } if c == 0.0 => Ok(None),
        MetricKind::Holder { alpha, c } => Ok(Some((eps / c).ln() / alpha)),
        MetricKind::LogPower { gamma, c } => Ok(Some(-(c / eps).powf(1.0 / gamma))),
        MetricKind::CustomTable => Err(Error::invalid("entropy needs a holder or log-power metric")),
    }
}

/// Inverse of [`log_radius`]: the distance at coordinate radius `e^{log_r}`.
pub(crate) fn radius_to_eps(metric: &MetricKind, log_r: f64) -> f64 {
    match *metric {
        MetricKind::Holder { alpha, c } => c * (alpha * log_r).exp(),
        MetricKind::LogPower { gamma, c } => {
            if log_r < 0.0 {
                c * (-log_r).powf(-gamma)
            } else {
                f64::INFINITY
            }
        }
        MetricKind::CustomTable => f64::NAN,
    }
}
