use serde_json::json;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] deepgp_core::Error),

    /// Bad config, bad flags or bad input files.
    #[error("{message}")]
    Invalid { message: String, pointer: Option<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0} verification check(s) failed")]
    VerifyFailed(usize),
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io(io),
            other => CliError::invalid(format!("csv: {other:?}"), None),
        }
    }
}

impl CliError {
    pub fn invalid(message: impl Into<String>, pointer: Option<&str>) -> Self {
        CliError::Invalid { message: message.into(), pointer: pointer.map(str::to_string) }
    }

    /// Attach a config pointer to validation errors raised by the core checks.
    pub fn at(pointer: &str) -> impl Fn(deepgp_core::Error) -> CliError + '_ {
        move |e| {
            if e.is_validation() {
                CliError::Invalid { message: e.to_string(), pointer: Some(pointer.to_string()) }
            } else {
                CliError::Core(e)
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Invalid { .. } => 1,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Invalid { .. } => "validation",
            CliError::Io(_) => "io",
            CliError::VerifyFailed(_) => "verify_failed",
        }
    }

    /// One JSON line for stderr.
    pub fn to_json_line(&self) -> String {
        let mut v = json!({"error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code()});
        if let CliError::Invalid { pointer: Some(p), .. } = self {
            v["pointer"] = json!(p);
        }
        v.to_string()
    }
}
