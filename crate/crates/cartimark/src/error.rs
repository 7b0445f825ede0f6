use std::path::{Path, PathBuf};

use serde::Serialize;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] cartimark_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("record {index}{}: {message}", patient_id.as_deref().map(|p| format!(" ({p})")).unwrap_or_default())]
    Record { index: usize, patient_id: Option<String>, rule: String, message: String },
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("`{0}` does not name a test subset")]
    NotATestSubset(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown image token")]
    UnknownImage,
    #[error("unknown patient `{0}`")]
    UnknownPatient(String),
    #[error("split does not match manifest: {0}")]
    SplitMismatch(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0} already exists")]
    OutputExists(PathBuf),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("missing or invalid API token")]
    Unauthorized,
}

impl AppError {
    pub fn code(&self) -> String {
        match self {
            AppError::Core(e) => e.code().to_string(),
            AppError::Io { .. } => "io_error".into(),
            AppError::Parse { .. } => "parse_error".into(),
            AppError::Record { rule, .. } => rule.clone(),
            AppError::UnknownDataset(_) => "unknown_dataset".into(),
            AppError::NotATestSubset(_) => "not_a_test_subset".into(),
            AppError::UnknownSession(_) => "unknown_session".into(),
            AppError::UnknownModel(_) => "unknown_model".into(),
            AppError::UnknownImage => "unknown_image".into(),
            AppError::UnknownPatient(_) => "unknown_patient".into(),
            AppError::SplitMismatch(_) => "split_mismatch".into(),
            AppError::Usage(_) => "usage".into(),
            AppError::OutputExists(_) => "output_exists".into(),
            AppError::Storage(_) => "storage_failure".into(),
            AppError::Unauthorized => "unauthorized".into(),
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code(), message: self.to_string() }
    }

    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> AppError {
        let path = path.as_ref().to_path_buf();
        move |source| AppError::Io { path, source }
    }

    pub fn parse(path: impl AsRef<Path>, message: impl ToString) -> AppError {
        AppError::Parse { path: path.as_ref().to_path_buf(), message: message.to_string() }
    }
}

/// Machine-readable error payload shared by the CLI and the HTTP service.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
