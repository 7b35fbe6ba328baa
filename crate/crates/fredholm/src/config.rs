//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use fredholm_core::problem::registry;
use fredholm_core::ProblemSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    Integrate,
    Derivative,
    Geometric,
    AllocateOnly,
    RateStudy,
    CoverageStudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethodConfig {
    Analytic,
    Quadrature,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandChoice {
    GaussSim,
    NonasymptoticPsi,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMethod {
    Solve,
    Geometric,
    Derivative,
}

/// Registry problem, tagged by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    Constant {
        gamma: f64,
        #[serde(default = "one")]
        forcing: Vec<f64>,
        #[serde(default = "unit_box")]
        bounds: Vec<(f64, f64)>,
    },
    SeparablePoly {
        a: Vec<f64>,
        b: Vec<f64>,
        #[serde(default = "identity")]
        forcing: Vec<f64>,
        #[serde(default = "unit_interval")]
        bounds: (f64, f64),
    },
    GaussConv {
        c: f64,
        kappa: f64,
        #[serde(default = "one")]
        forcing: Vec<f64>,
        #[serde(default = "unit_box")]
        bounds: Vec<(f64, f64)>,
    },
    Custom {},
}

fn one() -> Vec<f64> {
    vec![1.0]
}
fn identity() -> Vec<f64> {
    vec![0.0, 1.0]
}
fn unit_box() -> Vec<(f64, f64)> {
    vec![(0.0, 1.0)]
}
fn unit_interval() -> (f64, f64) {
    (0.0, 1.0)
}

impl ProblemConfig {
    pub fn build(&self, grid: usize) -> Result<ProblemSpec, CliError> {
        let spec = match self {
            ProblemConfig::Constant { gamma, forcing, bounds } => registry::constant(*gamma, forcing, bounds, grid),
            ProblemConfig::SeparablePoly { a, b, forcing, bounds } => registry::separable_poly(a, b, forcing, *bounds, grid),
            ProblemConfig::GaussConv { c, kappa, forcing, bounds } => registry::gauss_conv(*c, *kappa, forcing, bounds, grid),
            ProblemConfig::Custom {} => {
                return Err(CliError::Config(
                    "problem `custom` is only available through the library builder".into(),
                ))
            }
        };
        spec.map_err(|e| CliError::Config(e.to_string()))
    }
}

fn d_epsilon() -> f64 {
    0.01
}
fn d_budget() -> u64 {
    100_000
}
fn d_delta() -> f64 {
    0.05
}
fn d_grid() -> usize {
    101
}
fn d_mode() -> Mode {
    Mode::Solve
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}
fn d_replications() -> usize {
    1
}
fn d_m_max() -> usize {
    12
}
fn d_n_sim() -> usize {
    20_000
}
fn d_band() -> BandChoice {
    BandChoice::Both
}
fn d_lambda() -> f64 {
    0.5
}
fn d_budgets() -> Vec<u64> {
    vec![1_000, 10_000, 100_000, 1_000_000]
}
fn d_rate_methods() -> Vec<RateMethod> {
    vec![RateMethod::Solve, RateMethod::Geometric]
}
fn d_true() -> bool {
    true
}
fn d_refinements() -> usize {
    3
}
fn d_mc_samples() -> u64 {
    20_000
}

/// Everything needed to reproduce a run. Missing fields take the defaults
/// listed in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_budget")]
    pub budget: u64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_grid")]
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_mode")]
    pub mode: Mode,
    #[serde(default = "d_out")]
    pub out_dir: PathBuf,
    #[serde(default = "d_replications")]
    pub replications: usize,
    /// Power-norm source; analytic when the registry has closed forms,
    /// else quadrature in 1-D, else Monte Carlo.
    #[serde(default)]
    pub norm_method: Option<NormMethodConfig>,
    #[serde(default = "d_m_max")]
    pub m_max: usize,
    #[serde(default = "d_mc_samples")]
    pub norm_mc_samples: u64,
    #[serde(default = "d_n_sim")]
    pub n_sim: usize,
    #[serde(default = "d_band")]
    pub band: BandChoice,
    /// Points per axis of the covariance grid; `min(grid, 21)` by default.
    #[serde(default)]
    pub covariance_grid: Option<usize>,
    /// Doublings of the covariance grid tried until `u(δ)` settles.
    #[serde(default = "d_refinements")]
    pub max_refinements: usize,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    /// Outer draws of the geometric method; `⌈√budget⌉` by default.
    #[serde(default)]
    pub outer: Option<usize>,
    #[serde(default = "d_budgets")]
    pub budgets: Vec<u64>,
    #[serde(default = "d_rate_methods")]
    pub rate_methods: Vec<RateMethod>,
    #[serde(default)]
    pub per_term: bool,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "d_true")]
    pub tail_report: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad("epsilon must lie in (0, 0.5)");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if self.grid < 2 {
            return bad("grid must be at least 2");
        }
        if self.budget == 0 {
            return bad("budget must be positive");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.m_max < 2 {
            return bad("m_max must be at least 2");
        }
        if self.n_sim == 0 {
            return bad("n_sim must be positive");
        }
        if self.covariance_grid.is_some_and(|g| g < 2) {
            return bad("covariance_grid must be at least 2");
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad("lambda must lie in (0, 1)");
        }
        if self.outer.is_some_and(|m| m < 2) {
            return bad("outer must be at least 2");
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return bad("budgets must be a non-empty list of positive integers");
        }
        if self.rate_methods.is_empty() {
            return bad("rate_methods must not be empty");
        }
        if self.workers == Some(0) {
            return bad("workers must be positive");
        }
        if let ProblemConfig::Custom {} = self.problem {
            return bad("problem `custom` is only available through the library builder");
        }
        Ok(())
    }

    pub fn covariance_points(&self) -> usize {
        self.covariance_grid.unwrap_or(self.grid.min(21))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
