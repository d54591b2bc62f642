use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "grid of {points:.3e} points exceeds the budget of {budget}; \
         coarsen h to at least {suggested_h:.6} or reduce the dimension"
    )]
    GridBudget {
        points: f64,
        budget: usize,
        suggested_h: f64,
    },

    #[error("exact 1-d oracle cannot handle this objective: {0}")]
    NotPiecewiseLinear(String),

    #[error("an exact oracle is required: {0}")]
    NotExact(String),

    #[error("adversary protocol: {0}")]
    Protocol(String),

    #[error("need at least {need} replications, got {got}")]
    TooFewReplications { need: usize, got: usize },

    #[error("rate fit: {0}")]
    RateFit(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {replication}: {source}")]
    Replication {
        replication: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{player} player: {source}")]
    Player {
        player: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Machine-readable category printed by the command line tool.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::CheckFailed(_) => "check",
            Error::Io(_) | Error::Csv(_) => "io",
            _ => "runtime",
        }
    }

    /// `2` for configuration errors, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
