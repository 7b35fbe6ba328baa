use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{check_delta, BandMethod, ConfidenceBand};
use crate::error::{Error, Result};
use crate::estimator::CovarianceModel;
use crate::exec::Executor;
use crate::math::{empirical_quantile, fit_slope};
use crate::prelude::*;
use crate::rng::{substream, uniform, Purpose};

const BATCH: usize = 1024;

/// Lower Cholesky factor of `Z + r·I`, trying `r = 1e−12·tr, 1e−11·tr, …,
/// 1e−6·tr`. Returns the factor and the ridge used. A zero matrix gives a
/// zero factor.
pub fn cholesky_with_jitter(cov: &CovarianceModel) -> Result<(DMatrix<f64>, f64)> {
    let g = cov.len();
    let trace = cov.trace();
    if trace == 0.0 {
        return Ok((DMatrix::zeros(g, g), 0.0));
    }
    let z = DMatrix::from_row_slice(g, g, &cov.z_hat);
    let mut ridge = 1e-12 * trace;
    loop {
        let mut m = z.clone();
        for j in 0..g {
            m[(j, j)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            return Ok((ch.l(), ridge));
        }
        if ridge >= 1e-6 * trace * (1.0 - 1e-9) {
            return Err(Error::NotPsd { ridge });
        }
        ridge *= 10.0;
    }
}

/// `n_sim` draws of `max_j |X_j|` for `X ~ N(0, Z + ridge)`, sorted
/// ascending. Batches of 1024 draws use their own substreams.
pub fn simulate_sups<E: Executor + ?Sized>(
    cov: &CovarianceModel,
    n_sim: usize,
    seed: u64,
    exec: &E,
) -> Result<(Vec<f64>, f64)> {
    let (l, ridge) = cholesky_with_jitter(cov)?;
    let g = cov.len();
    let batches = n_sim.div_ceil(BATCH);
    let parts = exec.run(batches, |b| {
        let mut rng = substream(seed, Purpose::GaussBatch, b as u64, 0, 0);
        let count = BATCH.min(n_sim - b * BATCH);
        let mut out = Vec::with_capacity(count);
        let mut w = DVector::zeros(g);
        for _ in 0..count {
            for wi in w.iter_mut() {
                *wi = StandardNormal.sample(&mut rng);
            }
            let x = &l * &w;
            out.push(x.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
        out
    });
    let mut sups: Vec<f64> = parts.into_iter().flatten().collect();
    sups.sort_by(f64::total_cmp);
    Ok((sups, ridge))
}

/// Band whose `u(δ)` is the empirical `(1 − δ)`-quantile of simulated
/// Gaussian suprema.
pub fn simulate_sup_quantile<E: Executor + ?Sized>(
    cov: &CovarianceModel,
    delta: f64,
    n_sim: usize,
    seed: u64,
    n: u64,
    exec: &E,
) -> Result<ConfidenceBand> {
    check_delta(delta)?;
    if n_sim == 0 || n == 0 {
        return Err(Error::invalid("n_sim and n must be positive"));
    }
    let (sups, ridge) = simulate_sups(cov, n_sim, seed, exec)?;
    let u = empirical_quantile(&sups, 1.0 - delta);
    Ok(ConfidenceBand {
        delta,
        u_delta: u,
        n,
        half_width: u / (n as f64).sqrt(),
        method: BandMethod::GaussSim,
        n_sim: Some(n_sim),
        sigma_plus_sq: cov.sigma_plus_sq,
        ridge,
        covariance: Some(cov.clone()),
        kappa_fit: None,
        c_fit: None,
    })
}

#[derive(Debug, Clone, Default)]
pub struct TailOptions {
    /// Thresholds; the upper decile of the sample when `None`.
    pub u_grid: Option<Vec<f64>>,
    /// Bootstrap resamples for the interval on `κ` and `C` (0 skips it).
    pub bootstrap: usize,
    pub seed: u64,
}

/// Fit of `P(sup|X| > u) ≈ C u^{κ−1} exp(−u²/(2σ₊²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    pub kappa: f64,
    pub c: f64,
    pub u_grid: Vec<f64>,
    pub exceedances_at_max: usize,
    /// Percentile intervals (2.5 %, 97.5 %) when bootstrapped.
    pub kappa_ci: Option<(f64, f64)>,
    pub c_ci: Option<(f64, f64)>,
}

const MIN_EXCEEDANCES: usize = 50;

fn fit_tail(sorted: &[f64], sigma_sq: f64, u_grid: &[f64]) -> Option<(f64, f64)> {
    let n = sorted.len() as f64;
    let mut xs = Vec::with_capacity(u_grid.len());
    let mut ys = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let above = sorted.len() - sorted.partition_point(|&s| s <= u);
        if above == 0 || u <= 0.0 {
            continue;
        }
        xs.push(u.ln());
        ys.push((above as f64 / n).ln() + u * u / (2.0 * sigma_sq));
    }
    if xs.len() < 2 {
        return None;
    }
    let slope = fit_slope(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    Some((slope + 1.0, (my - slope * mx).exp()))
}

/// Report-only tail shape fit on sorted simulated suprema.
pub fn tail_shape_report(cov: &CovarianceModel, sims: &[f64], opts: &TailOptions) -> Result<TailFit> {
    let sigma_sq = cov.sigma_plus_sq;
    let mut sorted = sims.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let count_above = |u: f64| n - sorted.partition_point(|&s| s <= u);
    let u_grid = match &opts.u_grid {
        Some(g) => g.clone(),
        None => {
            if n < 10 * MIN_EXCEEDANCES || sigma_sq <= 0.0 {
                return Err(Error::TooFewExceedances { found: 0, needed: MIN_EXCEEDANCES });
            }
            let lo = sorted[(0.9 * n as f64) as usize];
            let hi = sorted[n - MIN_EXCEEDANCES - 1];
            (0..16).map(|i| lo + (hi - lo) * i as f64 / 15.0).collect()
        }
    };
    let top = u_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let found = if top.is_finite() { count_above(top) } else { 0 };
    if sigma_sq <= 0.0 || found < MIN_EXCEEDANCES {
        return Err(Error::TooFewExceedances { found, needed: MIN_EXCEEDANCES });
    }
    let (kappa, c) = fit_tail(&sorted, sigma_sq, &u_grid).ok_or(Error::TooFewExceedances { found, needed: MIN_EXCEEDANCES })?;
    let (mut kappa_ci, mut c_ci) = (None, None);
    if opts.bootstrap > 0 {
        let mut ks = Vec::with_capacity(opts.bootstrap);
        let mut cs = Vec::with_capacity(opts.bootstrap);
        let mut resample = vec![0.0; n];
        for b in 0..opts.bootstrap {
            let mut rng = substream(opts.seed, Purpose::Bootstrap, b as u64, 0, 0);
            for r in resample.iter_mut() {
                *r = sorted[((uniform(&mut rng) * n as f64) as usize).min(n - 1)];
            }
            resample.sort_by(f64::total_cmp);
            if let Some((k, c)) = fit_tail(&resample, sigma_sq, &u_grid) {
                ks.push(k);
                cs.push(c);
            }
        }
        ks.sort_by(f64::total_cmp);
        cs.sort_by(f64::total_cmp);
        if !ks.is_empty() {
            kappa_ci = Some((empirical_quantile(&ks, 0.025), empirical_quantile(&ks, 0.975)));
            c_ci = Some((empirical_quantile(&cs, 0.025), empirical_quantile(&cs, 0.975)));
        }
    }
    Ok(TailFit { kappa, c, u_grid, exceedances_at_max: found, kappa_ci, c_ci })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Grid;
    use crate::estimator::CovarianceSource;
    use crate::exec::Sequential;
    use approx::assert_relative_eq;

    fn model(points: &[f64], z: Vec<f64>) -> CovarianceModel {
        CovarianceModel::new(Grid::from_points_1d(points), z, CovarianceSource::Analytic).unwrap()
    }

    #[test]
    fn zero_field_gives_zero_band() {
        let z = model(&[0.0, 0.5, 1.0], vec![0.0; 9]);
        for d in [0.01, 0.05, 0.1] {
            assert_eq!(simulate_sup_quantile(&z, d, 1000, 1, 100, &Sequential).unwrap().u_delta, 0.0);
        }
    }

    #[test]
    fn scalar_field_two_sided_quantile() {
        let sigma = 1.7;
        let z = model(&[0.5], vec![sigma * sigma]);
        let b = simulate_sup_quantile(&z, 0.05, 200_000, 11, 1, &Sequential).unwrap();
        assert_relative_eq!(b.u_delta / sigma, 1.959964, max_relative = 0.01);
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        assert_relative_eq!(normal.inverse_cdf(0.975), 1.959964, epsilon = 1e-3);
    }

    #[test]
    fn ts_fixture_self_consistent() {
        let c = 4.0 / 45.0;
        let z = model(&[0.5, 1.0], vec![c * 0.25, c * 0.5, c * 0.5, c]);
        let a = simulate_sup_quantile(&z, 0.05, 20_000, 3, 1, &Sequential).unwrap();
        let b = simulate_sup_quantile(&z, 0.05, 1_000_000, 4, 1, &Sequential).unwrap();
        assert_relative_eq!(a.u_delta, b.u_delta, max_relative = 0.03);
    }

    #[test]
    fn quantile_non_increasing_in_delta() {
        let z = model(&[0.0, 1.0], vec![1.0, 0.3, 0.3, 1.0]);
        let us: Vec<f64> =
            [0.01, 0.05, 0.1].iter().map(|&d| simulate_sup_quantile(&z, d, 20_000, 5, 1, &Sequential).unwrap().u_delta).collect();
        assert!(us[0] > us[1] && us[1] > us[2]);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let z = model(&[0.0, 1.0], vec![1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(simulate_sups(&z, 10, 1, &Sequential), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn rank_one_needs_jitter() {
        let z = model(&[0.0, 1.0], vec![1.0, 1.0, 1.0, 1.0]);
        let (_, ridge) = cholesky_with_jitter(&z).unwrap();
        assert!(ridge > 0.0 && ridge <= 2e-6);
    }

    #[test]
    fn scalar_tail_shape() {
        let z = model(&[0.5], vec![1.0]);
        let (sims, _) = simulate_sups(&z, 200_000, 8, &Sequential).unwrap();
        let fit = tail_shape_report(&z, &sims, &TailOptions { bootstrap: 20, ..Default::default() }).unwrap();
        assert!(fit.kappa.is_finite() && fit.c > 0.0);
        assert!(fit.kappa_ci.is_some());
        let zero = model(&[0.5], vec![0.0]);
        assert!(matches!(
            tail_shape_report(&zero, &vec![0.0; 1000], &TailOptions::default()),
            Err(Error::TooFewExceedances { .. })
        ));
    }
}
