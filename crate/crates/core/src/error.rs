use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("structure space too large: more than {limit} structures")]
    SpaceTooLarge { limit: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("resource budget exceeded: {0}")]
    Budget(String),

    #[error(
        "conditioning too tight{}: no acceptance in {attempts} attempts (empirical rate {rate})",
        node.as_ref().map(|n| format!(" at node {n}")).unwrap_or_default()
    )]
    ConditioningTooTight {
        node: Option<String>,
        attempts: usize,
        rate: f64,
    },

    #[error("mixing failure: {0}")]
    Mixing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::SpaceTooLarge { .. } => "space_too_large",
            Error::Numeric(_) => "numeric",
            Error::Budget(_) => "budget",
            Error::ConditioningTooTight { .. } => "conditioning_too_tight",
            Error::Mixing(_) => "mixing",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True for errors caused by bad inputs rather than numerics or budgets.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Config(_) | Error::Json(_))
    }
}
