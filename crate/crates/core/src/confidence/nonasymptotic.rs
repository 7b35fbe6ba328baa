use super::entropy::{entropy_h, log_radius, radius_to_eps};
use super::psi::{v_star, PsiFunction};
use super::{check_delta, BandMethod, ConfidenceBand};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::prelude::*;
use crate::problem::MetricKind;

/// Intermediate quantities of a non-asymptotic band.
#[derive(Debug, Clone, PartialEq)]
pub struct NonasymptoticReport {
    pub z_bar: f64,
    pub entropy_integral: f64,
    pub u_delta: f64,
    pub tail_at_u: f64,
}

/// `∫₀^σ exp(v_*(log 2N(x))) dx` over the radii where the covering needs
/// more than one cell. While every axis has fewer than 4096 cells the
/// covering count is a step function and the integral is summed exactly
/// over its steps; below that radius the ceiling is dropped and the smooth
/// remainder is integrated in `s = log(x_K/x)` by composite Simpson, refusing
/// when a tenfold refinement moves it by 1 % or more.
pub fn entropy_integral(bar: &PsiFunction, domain: &DomainSpec, metric: &MetricKind, sigma: f64) -> Result<f64> {
    const CELLS: usize = 4096;
    if sigma == 0.0 || log_radius(metric, sigma)?.is_none() {
        return Ok(0.0);
    }
    let g = |h: f64| if h <= 0.0 { 0.0 } else { v_star(bar, 2f64.ln() + h).exp() };
    let sides = domain.side_lengths();

    let x_floor = sides
        .iter()
        .map(|&l| radius_to_eps(metric, (l / (2.0 * CELLS as f64)).ln()))
        .fold(f64::INFINITY, f64::min)
        .min(sigma);
    let mut breaks = vec![x_floor, sigma];
    for &l in &sides {
        for k in 1..=CELLS {
            let x = radius_to_eps(metric, (l / (2.0 * k as f64)).ln());
            if x > x_floor && x < sigma {
                breaks.push(x);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut steps = 0.0;
    for w in breaks.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        steps += g(entropy_h(domain, metric, mid)?) * (w[1] - w[0]);
    }

    let smooth_h = |x: f64| -> f64 {
        let log_r = log_radius(metric, x).ok().flatten().unwrap_or(f64::NEG_INFINITY);
        sides.iter().map(|l| (l.ln() - core::f64::consts::LN_2 - log_r).max(0.0)).sum()
    };
    let integrand = |s: f64| {
        let x = x_floor * (-s).exp();
        g(smooth_h(x)) * x
    };
    let simpson = |panels: usize| {
        let s_max = 60.0;
        let hs = s_max / panels as f64;
        let mut acc = integrand(0.0) + integrand(s_max);
        for i in 1..panels {
            acc += integrand(i as f64 * hs) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * hs / 3.0
    };
    let coarse = simpson(200);
    let fine = simpson(2000);
    let total = steps + fine;
    if !total.is_finite() {
        return Err(Error::Divergent("entropy integral is not finite".into()));
    }
    if (fine - coarse).abs() >= 0.01 * total.max(f64::MIN_POSITIVE) {
        return Err(Error::Divergent(format!("refinement moved the small-radius part from {coarse} to {fine}")));
    }
    Ok(total)
}

/// `T(u) = inf_p (ψ̄(p) Z̄ / u)^p` over the tabulation of `ψ̄`.
pub fn tail_bound(bar: &PsiFunction, z_bar: f64, u: f64) -> f64 {
    let lz = z_bar.ln() - u.ln();
    bar.p
        .iter()
        .map(|&p| p * (bar.eval(p).ln() + lz))
        .filter(|v| !v.is_nan())
        .fold(f64::INFINITY, f64::min)
        .exp()
        .min(1.0)
}

/// Band from `Z̄ = σ_ψ + 9 ∫₀^{σ_ψ} exp(v_{*,ψ̄}(log 2N(T, d_ψ, x))) dx` and
/// the smallest `u ≥ 2Z̄` with `T(u) ≤ δ`. `metric` is the distance `d_ψ`.
pub fn nonasymptotic_band(
    psi: &PsiFunction,
    domain: &DomainSpec,
    metric: &MetricKind,
    sigma_psi: f64,
    delta: f64,
    n: u64,
) -> Result<(ConfidenceBand, NonasymptoticReport)> {
    check_delta(delta)?;
    if !(sigma_psi >= 0.0 && sigma_psi.is_finite()) || n == 0 {
        return Err(Error::invalid("need finite sigma_psi >= 0 and n > 0"));
    }
    let bar = psi.bar()?;
    let integral = entropy_integral(&bar, domain, metric, sigma_psi)?;
    let z_bar = sigma_psi + 9.0 * integral;
    let (u, tail) = if z_bar == 0.0 {
        (0.0, 0.0)
    } else {
        let lo = 2.0 * z_bar;
        let limit = 1000.0 * z_bar;
        if tail_bound(&bar, z_bar, lo) <= delta {
            (lo, tail_bound(&bar, z_bar, lo))
        } else if tail_bound(&bar, z_bar, limit) > delta {
            return Err(Error::BandTooWide { delta, limit });
        } else {
            let (mut a, mut b) = (lo, limit);
            while b - a > 1e-12 * b {
                let mid = 0.5 * (a + b);
                if tail_bound(&bar, z_bar, mid) <= delta {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            (b, tail_bound(&bar, z_bar, b))
        }
    };
    let band = ConfidenceBand {
        delta,
        u_delta: u,
        n,
        half_width: u / (n as f64).sqrt(),
        method: BandMethod::NonasymptoticPsi,
        n_sim: None,
        sigma_plus_sq: sigma_psi * sigma_psi,
        ridge: 0.0,
        covariance: None,
        kappa_fit: None,
        c_fit: None,
    };
    Ok((band, NonasymptoticReport { z_bar, entropy_integral: integral, u_delta: u, tail_at_u: tail }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_point_entropy_gives_sigma() {
        let d = DomainSpec::unit_interval(11).unwrap();
        let psi = PsiFunction::power(0.5).unwrap();
        let flat = MetricKind::Holder { alpha: 1.0, c: 0.0 };
        let (_, r) = nonasymptotic_band(&psi, &d, &flat, 0.7, 0.05, 100).unwrap();
        assert_eq!(r.z_bar, 0.7);
        assert_eq!(r.entropy_integral, 0.0);
    }

    #[test]
    fn bounded_support_single_p() {
        let d = DomainSpec::unit_interval(11).unwrap();
        let b = 8.0;
        let flat = MetricKind::Holder { alpha: 1.0, c: 0.0 };
        let delta = 0.01;
        let bar_b = b * b.sqrt() / (super::super::C0 * b.ln());
        // Narrow support: the infimum is the single Markov bound at p = b.
        let narrow = PsiFunction::analytic(b - 1e-6, b, |p| p.sqrt()).unwrap();
        let (band, r) = nonasymptotic_band(&narrow, &d, &flat, 1.0, delta, 1).unwrap();
        let want = bar_b * r.z_bar * delta.powf(-1.0 / b);
        assert!(want > 2.0 * r.z_bar);
        assert_relative_eq!(band.u_delta, want, max_relative = 1e-5);
        // Wider support can only tighten it.
        let wide = PsiFunction::analytic(1.0, b, |p| p.sqrt()).unwrap();
        let (band, _) = nonasymptotic_band(&wide, &d, &flat, 1.0, delta, 1).unwrap();
        assert!(band.u_delta <= want * (1.0 + 1e-9));
        assert!(tail_bound(&wide.bar().unwrap(), 1.0, band.u_delta) <= delta * (1.0 + 1e-9));
    }

    #[test]
    fn monotone_and_scaling() {
        let d = DomainSpec::unit_interval(11).unwrap();
        let psi = PsiFunction::power(0.5).unwrap();
        let m = MetricKind::Holder { alpha: 1.0, c: 0.3 };
        let u: Vec<f64> =
            [0.01, 0.05, 0.1].iter().map(|&dl| nonasymptotic_band(&psi, &d, &m, 0.3, dl, 100).unwrap().0.u_delta).collect();
        assert!(u[0] > u[1] && u[1] > u[2], "{u:?}");
        let (a, _) = nonasymptotic_band(&psi, &d, &m, 0.3, 0.05, 100).unwrap();
        let (b, _) = nonasymptotic_band(&psi, &d, &m, 0.3, 0.05, 400).unwrap();
        assert_relative_eq!(a.half_width, 2.0 * b.half_width, epsilon = 1e-15);
    }

    #[test]
    fn heavy_psi_is_too_wide() {
        let d = DomainSpec::unit_interval(11).unwrap();
        let psi = PsiFunction::analytic(1.0, 3.0, |p| p.powi(3)).unwrap();
        let flat = MetricKind::Holder { alpha: 1.0, c: 0.0 };
        assert!(matches!(nonasymptotic_band(&psi, &d, &flat, 1.0, 1e-12, 1), Err(Error::BandTooWide { .. })));
    }
}
