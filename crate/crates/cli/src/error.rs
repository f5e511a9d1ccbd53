use std::path::Path;

use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Inconsistent or malformed flags.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] depthreg::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(depthreg::Error::Io(_)) | CliError::Io { .. } => 4,
            CliError::Core(_) => 3,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "io",
        }
    }

    fn module(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "cli",
            CliError::Core(e) => e.module(),
            CliError::Io { .. } => "io",
        }
    }

    /// Single-line `{code, module, message, context}` object.
    pub fn to_json(&self, context: &Map<String, Value>) -> String {
        json!({
            "code": self.code(),
            "module": self.module(),
            "message": self.to_string(),
            "context": context,
        })
        .to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}
