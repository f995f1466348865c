use std::path::PathBuf;

use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{what}: {message}")]
    Format { what: String, message: String },
    #[error(transparent)]
    Core(#[from] compctl_core::Error),
    #[error("{0}")]
    Usage(String),
}

pub type AppResult<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub fn format(what: impl Into<String>, message: impl ToString) -> Self {
        AppError::Format { what: what.into(), message: message.to_string() }
    }

    /// 2 for an infeasible level or plant, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(e) if e.is_infeasible() => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let body = match self {
            AppError::Core(compctl_core::Error::Infeasible(v)) => json!({
                "kind": "infeasible",
                "verdict": "infeasible",
                "reason": v.reason.code(),
                "step": v.step,
                "value": v.value,
                "message": self.to_string(),
            }),
            AppError::Core(_) => json!({ "kind": "core", "message": self.to_string() }),
            AppError::Io { path, .. } => json!({ "kind": "io", "path": path, "message": self.to_string() }),
            AppError::Format { .. } => json!({ "kind": "format", "message": self.to_string() }),
            AppError::Usage(_) => json!({ "kind": "usage", "message": self.to_string() }),
        };
        json!({ "schema_version": crate::formats::SCHEMA_VERSION, "error": body })
    }
}
