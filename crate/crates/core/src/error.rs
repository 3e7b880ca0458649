use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The configuration document could not be parsed.
    #[error("configuration error in `{field}`: {reason}")]
    Schema { field: String, reason: String },

    /// A parsed value violates a model invariant.
    #[error("validation error in `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("state space of {states} states exceeds the supported {limit}; use model-free mode")]
    Capacity { states: u128, limit: usize },

    #[error("value iteration did not converge after {iterations} iterations (last span {last_span:e})")]
    NonConvergence { iterations: usize, last_span: f64 },

    #[error("no Lagrange multiplier up to {mu_cap} yields a feasible policy")]
    Infeasible { mu_cap: f64 },

    #[error("malformed policy file: {0}")]
    PolicyFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), reason: reason.into() }
    }
}
