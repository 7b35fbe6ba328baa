//! CSV and JSON artifacts. CSV files are RFC 4180 with a header row, UTF-8
//! and LF line endings; floats use the shortest representation that
//! round-trips.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use fredholm_core::allocation::VarianceBracket;
use fredholm_core::confidence::TailFit;
use fredholm_core::estimator::{CovarianceModel, EstimateTable};
use fredholm_core::neumann::TruncationPlan;
use fredholm_core::{BudgetAllocation, ConfidenceBand, Grid};
use serde::Serialize;

use crate::error::CliError;

/// Shortest round-trip decimal; exponent form outside `[1e−5, 1e16)`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

fn coord_headers(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("t_{i}")).collect()
}

/// `t_1..t_dim, value, var, n_used, mode, seed`.
pub fn write_estimate(path: &Path, table: &EstimateTable) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = coord_headers(table.t_grid.dim());
    header.extend(["value", "var", "n_used", "mode", "seed"].map(String::from));
    w.write_record(&header)?;
    for (j, t) in table.t_grid.points().enumerate() {
        let mut row: Vec<String> = t.iter().map(|&x| fmt_f64(x)).collect();
        row.push(fmt_f64(table.values[j]));
        row.push(fmt_f64(table.pointwise_var[j]));
        row.push(table.n_used.to_string());
        row.push(table.mode.as_str().to_string());
        row.push(table.seed.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t_1..t_dim, term_1..term_N`.
pub fn write_per_term(path: &Path, table: &EstimateTable) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = coord_headers(table.t_grid.dim());
    header.extend((1..=table.per_term.len()).map(|m| format!("term_{m}")));
    w.write_record(&header)?;
    for (j, t) in table.t_grid.points().enumerate() {
        let mut row: Vec<String> = t.iter().map(|&x| fmt_f64(x)).collect();
        row.extend(table.per_term.iter().map(|r| fmt_f64(r[j])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn point_label(p: &[f64]) -> String {
    p.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(";")
}

/// Matrix with a grid header: first column holds the row point, the header
/// the column points (coordinates joined by `;`).
pub fn write_covariance(path: &Path, cov: &CovarianceModel) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(cov.t_grid.points().map(point_label));
    w.write_record(&header)?;
    for (j, t) in cov.t_grid.points().enumerate() {
        let mut row = vec![point_label(t)];
        row.extend((0..cov.len()).map(|k| fmt_f64(cov.get(j, k))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Grid coordinates followed by named reference columns.
pub fn write_columns(path: &Path, grid: &Grid, columns: &[(&str, Vec<f64>)]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = coord_headers(grid.dim());
    header.extend(columns.iter().map(|c| c.0.to_string()));
    w.write_record(&header)?;
    for (j, t) in grid.points().enumerate() {
        let mut row: Vec<String> = t.iter().map(|&x| fmt_f64(x)).collect();
        row.extend(columns.iter().map(|c| fmt_f64(c.1[j])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub method: &'static str,
    pub n: u64,
    pub replication: usize,
    pub sup_error: f64,
}

pub fn write_rates(path: &Path, rows: &[RateRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["method", "n", "replication", "sup_error"])?;
    for r in rows {
        w.write_record([r.method.to_string(), r.n.to_string(), r.replication.to_string(), fmt_f64(r.sup_error)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub replication: usize,
    pub covered: bool,
    pub sup_error: f64,
    pub half_width: f64,
}

pub fn write_coverage(path: &Path, rows: &[CoverageRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["replication", "covered", "sup_error", "half_width"])?;
    for r in rows {
        w.write_record([
            r.replication.to_string(),
            u8::from(r.covered).to_string(),
            fmt_f64(r.sup_error),
            fmt_f64(r.half_width),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BandJson {
    pub delta: f64,
    pub u_delta: f64,
    pub method: &'static str,
    pub n: u64,
    pub half_width: f64,
    pub sigma_plus_sq: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_sim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance_grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_fit: Option<f64>,
    #[serde(rename = "C_fit", skip_serializing_if = "Option::is_none")]
    pub c_fit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_bar: Option<f64>,
}

impl BandJson {
    pub fn new(b: &ConfidenceBand) -> Self {
        BandJson {
            delta: b.delta,
            u_delta: b.u_delta,
            method: b.method.as_str(),
            n: b.n,
            half_width: b.half_width,
            sigma_plus_sq: b.sigma_plus_sq,
            n_sim: b.n_sim,
            ridge: b.n_sim.map(|_| b.ridge),
            covariance_grid: b.covariance.as_ref().map(|c| c.len()),
            kappa_fit: b.kappa_fit,
            c_fit: b.c_fit,
            z_bar: None,
        }
    }

    pub fn with_tail(mut self, fit: Option<&TailFit>) -> Self {
        if let Some(f) = fit {
            self.kappa_fit = Some(f.kappa);
            self.c_fit = Some(f.c);
        }
        self
    }
}

/// The first band is the primary one; further methods follow in `others`.
#[derive(Debug, Clone, Serialize)]
pub struct BandFile {
    #[serde(flatten)]
    pub primary: BandJson,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub others: Vec<BandJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationJson {
    pub n_total: u64,
    #[serde(rename = "N")]
    pub n_terms: usize,
    pub epsilon: f64,
    pub tail_bound: f64,
    pub theta: Vec<f64>,
    pub counts: Vec<u64>,
    pub cost_b: u64,
    pub phi_predicted: f64,
    pub phi_continuous: f64,
    pub r_half: f64,
    pub r_minus_half: f64,
    pub variance_upper: Option<f64>,
    pub variance_lower: Option<f64>,
    pub proxies: Vec<f64>,
}

impl AllocationJson {
    pub fn new(a: &BudgetAllocation, plan: &TruncationPlan, bracket: Option<VarianceBracket>) -> Self {
        AllocationJson {
            n_total: a.n_total,
            n_terms: a.n_terms,
            epsilon: plan.epsilon,
            tail_bound: plan.tail_bound,
            theta: a.theta.clone(),
            counts: a.counts.clone(),
            cost_b: a.cost_b,
            phi_predicted: a.phi_predicted,
            phi_continuous: a.continuous_optimum(),
            r_half: a.r_half,
            r_minus_half: a.r_minus_half,
            variance_upper: bracket.map(|b| b.upper),
            variance_lower: bracket.map(|b| b.lower),
            proxies: a.proxies.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, 1.5, -2.25, 1e-7, 123456.789, 1e20, 0.1 + 0.2, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(1.5), "1.5");
        assert_eq!(fmt_f64(1e-7), "1e-7");
    }
}
