use crate::prelude::*;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Which operator a contraction diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    /// The kernel operator `S` itself.
    S,
    /// The Kronecker square `U` (kernel `K²`).
    U,
}

impl core::fmt::Display for Operator {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Operator::S => f.write_str("S"),
            Operator::U => f.write_str("U"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {context} at t={t:?}, x={x:?}")]
    NonFinite {
        context: &'static str,
        t: Vec<f64>,
        x: Vec<f64>,
    },

    #[error("operator {which} is not contractive: fitted decay rate {beta} >= 1")]
    Contractivity { which: Operator, beta: f64 },

    #[error("budget {given} is below the minimum {required} (one replicate per term)")]
    Budget { required: u64, given: u64 },

    #[error("quadrature oracle infeasible: {0}")]
    OracleInfeasible(String),

    #[error("derivative estimation needs a 1-D domain and a kernel t-derivative")]
    UnsupportedDerivative,

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("covariance is not positive semidefinite even with ridge {ridge}")]
    NotPsd { ridge: f64 },

    #[error("no u <= {limit} reaches tail level {delta}")]
    BandTooWide { delta: f64, limit: f64 },

    #[error("realized cost {realized} exceeds twice the budget {budget}")]
    CostExceeded { realized: u64, budget: u64 },

    #[error("only {found} exceedances at the largest u, need at least {needed}")]
    TooFewExceedances { found: usize, needed: usize },

    #[error("entropy integral does not converge: {0}")]
    Divergent(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
