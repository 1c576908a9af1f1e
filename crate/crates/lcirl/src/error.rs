use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed or inconsistent input; exit code 2.
    #[error("{0}")]
    Input(String),
    /// A numerical failure during fitting or optimization; exit code 3.
    #[error("{0}")]
    Numerical(String),
}

pub type AppResult<T> = Result<T, AppError>;

#[derive(Serialize)]
struct Summary<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Io { .. } => "io",
            AppError::Input(_) => "input",
            AppError::Numerical(_) => "numerical",
        }
    }

    /// One-line JSON summary for scripts.
    pub fn summary(&self) -> String {
        let s = Summary { error: self.kind(), exit_code: self.exit_code(), message: self.to_string() };
        serde_json::to_string(&s).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.kind()))
    }

    /// Wraps a core error, keeping its input/numerical classification.
    pub fn core(context: impl std::fmt::Display, e: lcirl_core::Error) -> Self {
        use lcirl_core::Error as E;
        let numerical = match &e {
            E::NonFinite { .. } | E::NotPositiveDefinite { .. } | E::Divergence { .. } => true,
            E::Rollout { source, .. } => matches!(**source, E::NonFinite { .. }),
            _ => false,
        };
        let message = format!("{context}: {e}");
        if numerical {
            AppError::Numerical(message)
        } else {
            AppError::Input(message)
        }
    }
}

/// Attaches context to core results.
pub trait Context<T> {
    fn context(self, what: impl std::fmt::Display) -> AppResult<T>;
}

impl<T> Context<T> for lcirl_core::Result<T> {
    fn context(self, what: impl std::fmt::Display) -> AppResult<T> {
        self.map_err(|e| AppError::core(what, e))
    }
}
