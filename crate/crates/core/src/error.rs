use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no constraint between nodes {i} and {j}")]
    MissingConstraint { i: usize, j: usize },

    #[error("horizon too short: the delta interval is empty (needs eta <= {max_eta:.6e}{})",
        .min_horizon.map(|t| format!(", i.e. T >= {}", t.ceil())).unwrap_or_default())]
    HorizonTooShort { max_eta: f64, min_horizon: Option<f64> },

    #[error("numerical divergence at iteration {iteration}: {detail}")]
    NumericalDivergence { iteration: usize, detail: String },

    #[error("query point for node {node} has norm {norm} outside the feasible ball of radius {bound}")]
    FeasibilityViolation { node: usize, norm: f64, bound: f64 },

    #[error(
        "reference solver did not converge after {iterations} iterations \
         (movement {movement:.3e}, max constraint violation {max_violation:.3e})"
    )]
    OracleFailure { iterations: usize, movement: f64, max_violation: f64 },

    #[error("initial cost gap {0} is not positive")]
    DegenerateStart(f64),

    #[error("rate fit undefined: {0}")]
    FitUndefined(String),

    #[error("target gap {target} never reached (best recorded gap {best})")]
    TargetUnreached { target: f64, best: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
