//! Norms → truncation → allocation → solve → bands, and the artifacts of
//! each mode.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fredholm_core::allocation::{derivative_allocation, optimal_allocation, variance_bracket};
use fredholm_core::confidence::{
    default_p_grid, natural_psi_from_r, nonasymptotic_band, simulate_sup_quantile, simulate_sups, tail_shape_report,
    NonasymptoticReport, TailFit, TailOptions,
};
use fredholm_core::estimator::{
    derivative_solve, derivative_solve_with_covariance, estimate_covariance, estimate_parametric_integral,
    estimate_parametric_integral_with_covariance, solve_fredholm_mc, solve_geometric, solve_with_covariance,
    CovarianceModel, CovarianceSource, EstimateTable, GeometricOptions,
};
use fredholm_core::neumann::{apply_power_quadrature, choose_truncation, truncated_solution_oracle, ORACLE_MAX_POWER};
use fredholm_core::problem::{power_norms_with, NormMethod, NormOptions, QUADRATURE_MAX_POWER};
use fredholm_core::{ConfidenceBand, Grid, MetricKind, PowerNormTable, ProblemSpec, TruncationPlan};
use serde::Serialize;

use crate::config::{BandChoice, ExperimentConfig, Mode, NormMethodConfig};
use crate::error::CliError;
use crate::export::{self, AllocationJson, BandFile, BandJson};
use crate::parallel::Pool;
use crate::studies;

/// Largest covariance grid (total points) the refinement loop will try.
const MAX_COVARIANCE_POINTS: usize = 161;

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    /// Human-readable one-line results, printed by the CLI.
    pub lines: Vec<String>,
}

/// The problem instance with its power norms and truncation level.
pub struct Prepared {
    pub spec: ProblemSpec,
    pub pnt: PowerNormTable,
    pub plan: TruncationPlan,
}

pub fn norm_method(cfg: &ExperimentConfig, spec: &ProblemSpec) -> NormMethod {
    match cfg.norm_method {
        Some(NormMethodConfig::Analytic) => NormMethod::Analytic,
        Some(NormMethodConfig::Quadrature) => NormMethod::Quadrature,
        Some(NormMethodConfig::Mc) => NormMethod::Mc,
        None if spec.analytic.power_norms.is_some() => NormMethod::Analytic,
        None if spec.dim() == 1 => NormMethod::Quadrature,
        None => NormMethod::Mc,
    }
}

fn method_name(m: NormMethod) -> &'static str {
    match m {
        NormMethod::Analytic => "analytic",
        NormMethod::Quadrature => "quadrature",
        NormMethod::Mc => "mc",
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let spec = cfg.problem.build(cfg.grid)?;
    let method = norm_method(cfg, &spec);
    let m_max = if method == NormMethod::Quadrature { cfg.m_max.min(QUADRATURE_MAX_POWER) } else { cfg.m_max };
    let opts = NormOptions { mc_samples: cfg.norm_mc_samples, seed: cfg.seed };
    let pnt = power_norms_with(&spec, m_max, method, &opts)?;
    pnt.ensure_contractive()?;
    let plan = choose_truncation(&pnt, spec.f_norm, cfg.epsilon)?;
    Ok(Prepared { spec, pnt, plan })
}

/// Closed-form `y_λ` on the grid, if the registry has one.
pub fn exact_solution(spec: &ProblemSpec, lambda: f64, grid: &Grid) -> Option<Vec<f64>> {
    let f = spec.analytic.solution.as_ref()?;
    Some(grid.points().map(|t| f(t, lambda)).collect())
}

pub fn exact_derivative(spec: &ProblemSpec, grid: &Grid) -> Option<Vec<f64>> {
    let f = spec.analytic.solution_dt.as_ref()?;
    Some(grid.points().map(|t| f(t)).collect())
}

/// Truncated oracle when quadrature can deliver it.
fn oracle_if_feasible(spec: &ProblemSpec, plan: &TruncationPlan, grid: &Grid) -> Option<Vec<f64>> {
    if spec.dim() == 1 && plan.n_terms <= ORACLE_MAX_POWER {
        truncated_solution_oracle(spec, plan, grid).ok()
    } else {
        None
    }
}

/// Non-asymptotic band with `ψ = ψ_R / ψ_R(2)`, `σ_ψ = σ₊` and the
/// registry metric rescaled by `σ_ψ`.
pub fn psi_band(spec: &ProblemSpec, sigma_plus_sq: f64, delta: f64, n: u64) -> Result<(ConfidenceBand, NonasymptoticReport), CliError> {
    let sigma_psi = sigma_plus_sq.max(0.0).sqrt();
    let psi = natural_psi_from_r(spec, &default_p_grid())?.normalized(2.0)?;
    let metric = match spec.metric_kind {
        MetricKind::Holder { alpha, c } => MetricKind::Holder { alpha, c: c * sigma_psi },
        MetricKind::LogPower { gamma, c } => MetricKind::LogPower { gamma, c: c * sigma_psi },
        MetricKind::CustomTable => {
            return Err(CliError::Config("the non-asymptotic band needs a holder or log-power metric".into()))
        }
    };
    Ok(nonasymptotic_band(&psi, &spec.domain, &metric, sigma_psi, delta, n)?)
}

pub struct BandSet {
    pub bands: Vec<ConfidenceBand>,
    pub covariance: CovarianceModel,
    pub tail: Option<TailFit>,
    pub z_bar: Option<f64>,
}

/// Gauss-sim band with covariance-grid refinement, then the non-asymptotic
/// band, as selected by `cfg.band`.
pub fn build_bands(
    cfg: &ExperimentConfig,
    spec: &ProblemSpec,
    pool: &Pool,
    n: u64,
    make_cov: &dyn Fn(&Grid) -> Result<CovarianceModel, CliError>,
) -> Result<BandSet, CliError> {
    let dim = spec.dim() as u32;
    let mut g = cfg.covariance_points();
    let mut cov = make_cov(&spec.domain.with_grid(g)?.grid())?;
    let mut bands = Vec::new();
    let mut tail = None;
    if cfg.band != BandChoice::NonasymptoticPsi {
        let mut band = simulate_sup_quantile(&cov, cfg.delta, cfg.n_sim, cfg.seed, n, pool)?;
        for _ in 0..cfg.max_refinements {
            let g2 = 2 * g - 1;
            if band.u_delta == 0.0 || g2.pow(dim) > MAX_COVARIANCE_POINTS {
                break;
            }
            let cov2 = make_cov(&spec.domain.with_grid(g2)?.grid())?;
            let band2 = simulate_sup_quantile(&cov2, cfg.delta, cfg.n_sim, cfg.seed, n, pool)?;
            let change = (band2.u_delta - band.u_delta).abs() / band.u_delta;
            g = g2;
            cov = cov2;
            band = band2;
            if change < 0.01 {
                break;
            }
        }
        if cfg.tail_report && cov.sigma_plus_sq > 0.0 {
            let (sims, _) = simulate_sups(&cov, cfg.n_sim, cfg.seed, pool)?;
            tail = tail_shape_report(&cov, &sims, &TailOptions { seed: cfg.seed, ..Default::default() }).ok();
            if let Some(t) = &tail {
                band.kappa_fit = Some(t.kappa);
                band.c_fit = Some(t.c);
            }
        }
        bands.push(band);
    }
    let mut z_bar = None;
    if cfg.band != BandChoice::GaussSim {
        let (band, report) = psi_band(spec, cov.sigma_plus_sq, cfg.delta, n)?;
        z_bar = Some(report.z_bar);
        bands.push(band);
    }
    Ok(BandSet { bands, covariance: cov, tail, z_bar })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    mode: Mode,
    seed: u64,
    workers: usize,
    norm_method: &'static str,
    n_terms: Option<usize>,
    truncation_tail_bound: Option<f64>,
    wall_time_seconds: f64,
    artifacts: &'a [String],
    config: &'a ExperimentConfig,
}

struct Out<'a> {
    dir: &'a Path,
    artifacts: Vec<String>,
}

impl Out<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }
}

fn write_bands(out: &mut Out, set: &BandSet) -> Result<(), CliError> {
    let mut jsons: Vec<BandJson> = set.bands.iter().map(BandJson::new).collect();
    for j in jsons.iter_mut() {
        if j.method == "nonasymptotic-psi" {
            j.z_bar = set.z_bar;
        }
    }
    let mut it = jsons.into_iter();
    if let Some(primary) = it.next() {
        let primary = if primary.method == "gauss-sim" { primary.with_tail(set.tail.as_ref()) } else { primary };
        export::write_json(&out.path("band.json"), &BandFile { primary, others: it.collect() })?;
    }
    export::write_covariance(&out.path("covariance.csv"), &set.covariance)?;
    Ok(())
}

fn band_lines(set: &BandSet, lines: &mut Vec<String>) {
    for b in &set.bands {
        lines.push(format!("band {}: u({}) = {} half-width = {}", b.method.as_str(), b.delta, b.u_delta, b.half_width));
    }
}

fn write_estimate(out: &mut Out, cfg: &ExperimentConfig, est: &EstimateTable) -> Result<(), CliError> {
    export::write_estimate(&out.path("estimate.csv"), est)?;
    if cfg.per_term {
        export::write_per_term(&out.path("per_term.csv"), est)?;
    }
    Ok(())
}

/// Covariance of geometric outer replicates scaled so that `Cov ≈ Z / n`.
fn geometric_covariance(est: &EstimateTable, lambda: f64, budget: u64) -> Result<CovarianceModel, CliError> {
    let rows = &est.per_term;
    let m = rows.len();
    let g = est.t_grid.len();
    let scale = 1.0 / (1.0 - lambda);
    let mean: Vec<f64> = (0..g).map(|j| rows.iter().map(|r| r[j] * scale).sum::<f64>() / m as f64).collect();
    let mut z = vec![0.0; g * g];
    for r in rows {
        for j in 0..g {
            let dj = r[j] * scale - mean[j];
            for k in 0..g {
                z[j * g + k] += dj * (r[k] * scale - mean[k]);
            }
        }
    }
    let factor = budget as f64 / (m as f64 * (m - 1).max(1) as f64);
    z.iter_mut().for_each(|v| *v *= factor);
    Ok(CovarianceModel::new(est.t_grid.clone(), z, CovarianceSource::PlugInMc)?)
}

pub fn run(cfg: &ExperimentConfig, pool: &Pool) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let prep = prepare(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut out = Out { dir: &cfg.out_dir, artifacts: Vec::new() };
    let mut lines = Vec::new();
    let Prepared { spec, pnt, plan } = &prep;
    let grid = spec.domain.grid();
    lines.push(format!("N = {} (tail bound {})", plan.n_terms, plan.tail_bound));

    match cfg.mode {
        Mode::AllocateOnly | Mode::Solve => {
            let alloc = optimal_allocation(pnt, plan.n_terms, cfg.budget)?;
            let bracket = variance_bracket(pnt, plan.n_terms, cfg.budget, spec.f_norm).ok();
            export::write_json(&out.path("allocation.json"), &AllocationJson::new(&alloc, plan, bracket))?;
            lines.push(format!("allocation: counts {:?}, cost {}, phi {}", alloc.counts, alloc.cost_b, alloc.phi_predicted));
            if cfg.mode == Mode::Solve {
                let est = solve_fredholm_mc(spec, plan, &alloc, &grid, cfg.seed, pool)?;
                write_estimate(&mut out, cfg, &est)?;
                let mut cols: Vec<(&str, Vec<f64>)> = Vec::new();
                if let Some(y) = exact_solution(spec, 1.0, &grid) {
                    lines.push(format!("sup error vs exact: {}", sup_diff(&est.values, &y)));
                    cols.push(("exact", y));
                }
                if let Some(y) = oracle_if_feasible(spec, plan, &grid) {
                    cols.push(("truncated_oracle", y));
                }
                if !cols.is_empty() {
                    export::write_columns(&out.path("oracle.csv"), &grid, &cols)?;
                }
                let make_cov = |g: &Grid| -> Result<CovarianceModel, CliError> {
                    let (_, tc) = solve_with_covariance(spec, plan, &alloc, g, cfg.seed, pool)?;
                    Ok(estimate_covariance(&alloc, &tc)?)
                };
                let set = build_bands(cfg, spec, pool, cfg.budget, &make_cov)?;
                write_bands(&mut out, &set)?;
                band_lines(&set, &mut lines);
            }
        }
        Mode::Derivative => {
            let alloc = derivative_allocation(pnt, plan.n_terms, cfg.budget)?;
            export::write_json(&out.path("allocation.json"), &AllocationJson::new(&alloc, plan, None))?;
            let est = derivative_solve(spec, plan, &alloc, &grid, cfg.seed, pool)?;
            write_estimate(&mut out, cfg, &est)?;
            if let Some(y) = exact_derivative(spec, &grid) {
                lines.push(format!("sup error vs exact derivative: {}", sup_diff(&est.values, &y)));
                export::write_columns(&out.path("oracle.csv"), &grid, &[("exact_derivative", y)])?;
            }
            let make_cov = |g: &Grid| -> Result<CovarianceModel, CliError> {
                let (_, tc) = derivative_solve_with_covariance(spec, plan, &alloc, g, cfg.seed, pool)?;
                Ok(estimate_covariance(&alloc, &tc)?)
            };
            let set = build_bands(cfg, spec, pool, cfg.budget, &make_cov)?;
            write_bands(&mut out, &set)?;
            band_lines(&set, &mut lines);
        }
        Mode::Integrate => {
            let k = spec.kernel.clone();
            let f = spec.forcing.clone();
            let g = move |t: &[f64], x: &[f64]| k(t, x) * f(x);
            let est = estimate_parametric_integral(&g, &spec.mu, &grid, cfg.budget, cfg.seed, pool)?;
            write_estimate(&mut out, cfg, &est)?;
            if let Ok(y) = apply_power_quadrature(spec, 1, &grid) {
                lines.push(format!("sup error vs quadrature: {}", sup_diff(&est.values, &y)));
                export::write_columns(&out.path("oracle.csv"), &grid, &[("quadrature", y)])?;
            }
            let make_cov = |gr: &Grid| -> Result<CovarianceModel, CliError> {
                Ok(estimate_parametric_integral_with_covariance(&g, &spec.mu, gr, cfg.budget, cfg.seed, pool)?.1)
            };
            let set = build_bands(cfg, spec, pool, cfg.budget, &make_cov)?;
            write_bands(&mut out, &set)?;
            band_lines(&set, &mut lines);
        }
        Mode::Geometric => {
            let opts = GeometricOptions { lambda: cfg.lambda, outer: cfg.outer, budget: cfg.budget };
            let est = solve_geometric(spec, pnt, opts, &grid, cfg.seed, pool)?;
            write_estimate(&mut out, cfg, &est)?;
            if let Some(y) = exact_solution(spec, cfg.lambda, &grid) {
                lines.push(format!("sup error vs exact y_lambda: {}", sup_diff(&est.values, &y)));
                export::write_columns(&out.path("oracle.csv"), &grid, &[("exact", y)])?;
            }
            let make_cov = |g: &Grid| -> Result<CovarianceModel, CliError> {
                let e = solve_geometric(spec, pnt, opts, g, cfg.seed, pool)?;
                geometric_covariance(&e, cfg.lambda, cfg.budget)
            };
            let set = build_bands(cfg, spec, pool, cfg.budget, &make_cov)?;
            write_bands(&mut out, &set)?;
            band_lines(&set, &mut lines);
        }
        Mode::RateStudy => {
            let (rows, fits) = studies::rate_study(cfg, &prep, pool)?;
            export::write_rates(&out.path("rates.csv"), &rows)?;
            export::write_json(&out.path("rate_fit.json"), &fits)?;
            for f in &fits {
                lines.push(format!("rate {}: slope {}", f.method, f.slope));
            }
        }
        Mode::CoverageStudy => {
            let (rows, summary) = studies::coverage_study(cfg, &prep, pool)?;
            export::write_coverage(&out.path("coverage.csv"), &rows)?;
            export::write_json(&out.path("coverage_summary.json"), &summary)?;
            lines.push(format!("coverage {}/{} = {}", summary.covered, summary.replications, summary.fraction));
        }
    }

    let mut artifacts = out.artifacts.clone();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        tool: "fredholm",
        version: env!("CARGO_PKG_VERSION"),
        core_version: fredholm_core::VERSION,
        mode: cfg.mode,
        seed: cfg.seed,
        workers: pool.workers(),
        norm_method: method_name(pnt.method),
        n_terms: Some(plan.n_terms),
        truncation_tail_bound: Some(plan.tail_bound),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        artifacts: &artifacts,
        config: cfg,
    };
    export::write_json(&cfg.out_dir.join("manifest.json"), &manifest)?;
    Ok(RunSummary { mode: cfg.mode, out_dir: cfg.out_dir.clone(), artifacts, lines })
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
