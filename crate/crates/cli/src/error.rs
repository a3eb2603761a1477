use qpcocycle::Error;
use serde_json::{json, Value};

/// Exit codes: 0 ok, 1 numerical or I/O failure, 2 config, 3 no contraction,
/// 4 domain violation, 5 invariance failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn config(e: Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                Error::NoContractionFound { .. } => 3,
                Error::DomainViolation(_) => 4,
                Error::InvarianceDefect { .. } => 5,
                Error::SingularFiber { .. } | Error::NonConvergence { .. } | Error::RankDeficient { .. } => 1,
                _ => 2,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.code() {
            2 => "config",
            3 => "no-contraction",
            4 => "domain-violation",
            5 => "invariance-failure",
            _ => match self {
                CliError::Io(_) => "io",
                _ => "numerical",
            },
        }
    }

    fn details(&self) -> Value {
        match self {
            CliError::Core(Error::InvarianceDefect { defect, tol }) => json!({ "defect": defect, "tol": tol }),
            CliError::Core(Error::NoContractionFound { n_max, last_drift }) => {
                json!({ "n_max": n_max, "last_drift": last_drift })
            }
            CliError::Core(Error::ToleranceUnreachable { tol, needed, cap }) => {
                json!({ "tol": tol, "needed": needed.to_string(), "cap": cap })
            }
            _ => Value::Null,
        }
    }

    pub fn body(&self, command: Option<&str>, config_hash: Option<&str>) -> Value {
        json!({
            "error": {
                "kind": self.kind(),
                "code": self.code(),
                "message": self.to_string(),
                "details": self.details(),
            },
            "command": command,
            "config_hash": config_hash,
            "version": env!("CARGO_PKG_VERSION"),
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}
