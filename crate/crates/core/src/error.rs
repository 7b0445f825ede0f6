use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failures raised by the core algorithms.
///
/// Each variant maps to a stable snake_case code via [`Error::code`], which
/// the service and CLI surface to callers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("split would leave the {0} subset empty")]
    EmptySubset(&'static str),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("training subset contains a single class")]
    SingleClassTrainingSet,
    #[error("svm input contains a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label must be -1 or +1, got {0}")]
    InvalidLabel(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate phantom config: {0}")]
    DegenerateConfig(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("backbone `{0}` is not available in this build")]
    BackboneUnavailable(String),
    #[error("image of {width}x{height} cannot be coerced to the backbone input")]
    BadImageShape { width: usize, height: usize },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("grid point {index} failed: {source}")]
    GridPoint {
        index: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("unknown colormap `{0}`")]
    UnknownColormap(String),
    #[error("session is complete")]
    SessionComplete,
    #[error("session is not complete")]
    SessionIncomplete,
    #[error("out of order submission: expected {expected}, got {got}")]
    OutOfOrder { expected: String, got: String },
    #[error("conflicting duplicate submission for {0}")]
    DuplicateConflict(String),
    #[error("expected a {expected} model, got {got}")]
    ViewMismatch { expected: crate::types::View, got: crate::types::View },
    #[error("bundled table data is invalid: {0}")]
    BundledData(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidRatios(_) => "invalid_ratios",
            Error::EmptySubset(_) => "empty_subset",
            Error::EmptyManifest => "empty_manifest",
            Error::SingleClassTrainingSet => "single_class_training_set",
            Error::SingleClass => "single_class",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidLabel(_) => "invalid_label",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::EmptyInput => "empty_input",
            Error::DegenerateConfig(_) => "degenerate_config",
            Error::InvalidConfig(_) => "invalid_config",
            Error::BackboneUnavailable(_) => "backbone_unavailable",
            Error::BadImageShape { .. } => "bad_image_shape",
            Error::EmptyGrid => "empty_grid",
            Error::GridPoint { .. } => "grid_point_failed",
            Error::UnknownColormap(_) => "unknown_colormap",
            Error::SessionComplete => "session_complete",
            Error::SessionIncomplete => "session_incomplete",
            Error::OutOfOrder { .. } => "out_of_order",
            Error::DuplicateConflict(_) => "duplicate_conflict",
            Error::ViewMismatch { .. } => "view_mismatch",
            Error::BundledData(_) => "bundled_data_invalid",
        }
    }
}
