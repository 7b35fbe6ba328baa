//! Dependent-trial Monte-Carlo solver for linear Fredholm integral equations
//! of the second kind,
//!
//! ```text
//! y(t) = f(t) + ∫_T K(t, s) y(s) μ(ds),
//! ```
//!
//! with variance-optimal budget allocation across the truncated Neumann series
//! and uniform-norm confidence bands.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! thread-pool executor live in the companion `fredholm` crate.
//!
//! Pipeline:
//!
//! 1. [`problem`]: the equation instance, operator norms and power norms `r_m`.
//! 2. [`neumann`]: truncation level `N(ε)` and the deterministic quadrature oracle.
//! 3. [`allocation`]: the split of the budget `n` across the `N` terms.
//! 4. [`estimator`]: the Monte-Carlo engines and plug-in covariance.
//! 5. [`confidence`]: asymptotic (simulated Gaussian supremum) and
//!    non-asymptotic (moment/entropy) uniform bands.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod allocation;
pub mod confidence;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod neumann;
pub mod problem;
pub mod rng;

mod math;
mod prelude;

pub use allocation::BudgetAllocation;
pub use confidence::{BandMethod, ConfidenceBand, PsiFunction};
pub use domain::{DomainSpec, Grid, MeasureSampler};
pub use error::{Error, Result};
pub use estimator::{CovarianceModel, EstimateMode, EstimateTable};
pub use exec::{Executor, Sequential};
pub use math::fit_slope;
pub use neumann::TruncationPlan;
pub use problem::{MetricKind, PowerNormTable, ProblemSpec};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
