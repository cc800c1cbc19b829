use thiserror::Error;

pub type Result<T> = std::result::Result<T, AgalError>;

#[derive(Debug, Error)]
pub enum AgalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("pool too small on {date}: {size} assets survive, need at least 2")]
    PoolTooSmall { date: String, size: usize },

    #[error("covariance cleaning failed: {0}")]
    CleaningFailed(String),

    #[error("degenerate scaling: net exposure {denominator:e} cannot be normalized")]
    DegenerateScaling { denominator: f64 },

    #[error("degenerate residual predictor: the unit vector is parallel to the top eigenvector")]
    DegenerateResidual,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("insufficient history: {0}")]
    Coverage(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<AgalError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AgalError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        AgalError::InvalidInput(msg.into())
    }

    /// Wraps the error with a human-readable location (date, method, sample).
    pub fn context(self, context: impl Into<String>) -> Self {
        AgalError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers stripped.
    pub fn root(&self) -> &AgalError {
        match self {
            AgalError::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
