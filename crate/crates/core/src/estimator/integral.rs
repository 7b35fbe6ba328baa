use super::moments::{accumulate, Moments, StreamKey};
use super::{CovarianceModel, CovarianceSource, EstimateMode, EstimateTable};
use crate::domain::{Grid, MeasureSampler};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::prelude::*;
use crate::rng::Purpose;

/// `g(t, x)`, integrated over `x`.
pub type Integrand = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

fn run<E: Executor + ?Sized>(
    g: &Integrand,
    nu: &MeasureSampler,
    t_grid: &Grid,
    n: u64,
    seed: u64,
    exec: &E,
    track_cov: bool,
) -> Result<(EstimateTable, Moments)> {
    if n < 2 {
        return Err(Error::invalid("parametric integral needs n >= 2"));
    }
    let d = nu.dim();
    let key = StreamKey { seed, purpose: Purpose::Integral, index: nu.seed_stream_id(), draws_per_replicate: d as u64 };
    let mom = accumulate(exec, key, n, t_grid.len(), track_cov, |rng, buf| {
        let mut x = vec![0.0; d];
        nu.sample_into(rng, &mut x);
        for (o, t) in buf.iter_mut().zip(t_grid.points()) {
            *o = g(t, &x);
            if !o.is_finite() {
                return Err(Error::NonFinite { context: "parametric integrand", t: t.to_vec(), x: x.clone() });
            }
        }
        Ok(())
    })?;
    let table = EstimateTable {
        t_grid: t_grid.clone(),
        values: mom.mean.clone(),
        pointwise_var: mom.variance().iter().map(|v| v / n as f64).collect(),
        per_term: vec![mom.mean.clone()],
        n_used: n,
        scalar_draws: n * d as u64,
        seed,
        mode: EstimateMode::Integral,
    };
    Ok((table, mom))
}

/// `I_n(t) = n⁻¹ Σ_i g(t, η_i)` with one stream of draws `η_i ~ ν` shared by
/// all grid points.
pub fn estimate_parametric_integral<E: Executor + ?Sized>(
    g: &Integrand,
    nu: &MeasureSampler,
    t_grid: &Grid,
    n: u64,
    seed: u64,
    exec: &E,
) -> Result<EstimateTable> {
    Ok(run(g, nu, t_grid, n, seed, exec, false)?.0)
}

/// As [`estimate_parametric_integral`] plus the plug-in covariance
/// `Z(t, s) = Cov(g(t, η), g(s, η))`.
pub fn estimate_parametric_integral_with_covariance<E: Executor + ?Sized>(
    g: &Integrand,
    nu: &MeasureSampler,
    t_grid: &Grid,
    n: u64,
    seed: u64,
    exec: &E,
) -> Result<(EstimateTable, CovarianceModel)> {
    let (table, mom) = run(g, nu, t_grid, n, seed, exec, true)?;
    let z = mom.covariance().unwrap_or_default();
    Ok((table, CovarianceModel::new(t_grid.clone(), z, CovarianceSource::PlugInMc)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::exec::Sequential;
    use approx::assert_relative_eq;

    fn unit() -> MeasureSampler {
        MeasureSampler::uniform(&DomainSpec::unit_interval(11).unwrap())
    }

    #[test]
    fn linear_integrand_mean_and_variance() {
        let g = |t: &[f64], x: &[f64]| t[0] * x[0];
        let grid = Grid::from_points_1d(&[0.2, 0.6, 1.0]);
        let n = 400;
        let reps = 200;
        let mut sums = [0.0; 3];
        let mut sq = [0.0; 3];
        for r in 0..reps {
            let e = estimate_parametric_integral(&g, &unit(), &grid, n, r, &Sequential).unwrap();
            for j in 0..3 {
                sums[j] += e.values[j];
                sq[j] += e.values[j] * e.values[j];
            }
        }
        for (j, t) in [0.2, 0.6, 1.0].iter().enumerate() {
            let mean = sums[j] / reps as f64;
            let var_true = t * t / (12.0 * n as f64);
            assert!((mean - t / 2.0).abs() < 3.0 * (var_true / reps as f64).sqrt(), "t={t} mean={mean}");
            let var = sq[j] / reps as f64 - mean * mean;
            assert_relative_eq!(var, var_true, max_relative = 0.35);
        }
    }

    #[test]
    fn constant_integrand_has_no_variance() {
        let g = |_: &[f64], _: &[f64]| 2.5;
        let e = estimate_parametric_integral(&g, &unit(), &Grid::from_points_1d(&[0.0, 1.0]), 100, 1, &Sequential).unwrap();
        assert_eq!(e.values, vec![2.5, 2.5]);
        assert_eq!(e.pointwise_var, vec![0.0, 0.0]);
    }

    #[test]
    fn covariance_closed_form() {
        let g = |t: &[f64], x: &[f64]| t[0] * x[0];
        let grid = Grid::from_points_1d(&[0.5, 1.0]);
        let (_, z) = estimate_parametric_integral_with_covariance(&g, &unit(), &grid, 200_000, 3, &Sequential).unwrap();
        assert_relative_eq!(z.get(0, 1), 0.5 / 12.0, max_relative = 0.02);
        assert_relative_eq!(z.get(0, 1), 0.5 / 3.0 - 0.25 * 0.5, max_relative = 0.02);
    }

    #[test]
    fn non_finite_reports_location() {
        let g = |t: &[f64], x: &[f64]| if t[0] > 0.5 { f64::NAN } else { x[0] };
        let e = estimate_parametric_integral(&g, &unit(), &Grid::from_points_1d(&[0.0, 1.0]), 10, 1, &Sequential);
        match e {
            Err(Error::NonFinite { t, .. }) => assert_eq!(t, vec![1.0]),
            other => panic!("{other:?}"),
        }
        assert!(estimate_parametric_integral(&g, &unit(), &Grid::from_points_1d(&[0.0]), 1, 1, &Sequential).is_err());
    }
}
