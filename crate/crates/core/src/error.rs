use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad parameter `{field}`: {reason}")]
    BadParameter { field: String, reason: String },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    /// A one-step increment is riskless and nonzero, so no signed martingale
    /// measure exists and the opportunity process collapses to zero.
    #[error("degenerate step at node {node}: opportunity value {value:e} is not positive")]
    DegenerateStep { node: usize, value: f64 },

    #[error("tree too large for the oracle: {leaves} leaves (limit {limit})")]
    TooLarge { leaves: usize, limit: usize },

    #[error("martingale constraints are inconsistent (residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("strategy `{strategy}` requires a constant claim")]
    IncompatibleClaim { strategy: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn bad(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::BadParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
