use thiserror::Error;

/// Errors raised by the protocol, accounting and training routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapeError {
    #[error("invalid field parameters: {0}")]
    InvalidField(String),

    #[error("value {value} overflows the signed field embedding (limit {limit})")]
    Overflow { value: f64, limit: f64 },

    #[error("invalid threshold t = {threshold} for {total} share holders")]
    InvalidThreshold { threshold: usize, total: usize },

    #[error("need at least {needed} shares to reconstruct, got {got}")]
    InsufficientShares { needed: usize, got: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("sample counts are not symmetric: N = {total} is not divisible by S = {sites}")]
    AsymmetricInput { total: usize, sites: usize },

    #[error("infeasible noise plan: variance of site {site} would be {value}")]
    InfeasiblePlan { site: usize, value: f64 },

    #[error("singular system (condition number {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{colluders} colluding sites exceed the bound {bound} for S = {sites}; the scheme provides no formal privacy")]
    InvalidCollusion {
        colluders: usize,
        bound: usize,
        sites: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no epsilon achieves delta target {0}")]
    NoSolution(f64),

    #[error("sample {index} has norm {norm} above the bound {bound}")]
    NormViolation { index: usize, norm: f64, bound: f64 },

    #[error("training diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<CapeError>,
    },
}

impl CapeError {
    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        CapeError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error below any context wrappers.
    pub fn root(&self) -> &CapeError {
        match self {
            CapeError::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by invalid user input or configuration rather
    /// than by a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            CapeError::Config(_)
                | CapeError::InvalidField(_)
                | CapeError::InvalidThreshold { .. }
                | CapeError::InvalidWeights(_)
                | CapeError::ShapeMismatch(_)
                | CapeError::InvalidNetwork(_)
                | CapeError::AsymmetricInput { .. }
                | CapeError::InvalidCollusion { .. }
                | CapeError::Domain(_)
                | CapeError::Io(_)
                | CapeError::Format(_)
        )
    }
}

impl From<std::io::Error> for CapeError {
    fn from(err: std::io::Error) -> Self {
        CapeError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CapeError>;
