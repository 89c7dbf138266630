use thiserror::Error;

/// Errors produced anywhere in the segmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("image or target size must be non-zero")]
    ZeroSize,
    #[error("degenerate histogram: all mass in a single bin")]
    DegenerateHistogram,
    #[error("no non-zero pixels to select from")]
    EmptySelection,
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("component is not a subset of the mask")]
    SubsetViolation,
    #[error("core not found ({0})")]
    CoreNotFound(&'static str),
    #[error("label stack has no sample pixels")]
    NoSample,
    #[error("invalid phantom geometry: {0}")]
    InvalidGeometry(String),
    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("batch normalization needs at least two values per channel")]
    InsufficientStatistics,
    #[error("dropout rate must be in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("max pooling needs even spatial dimensions, got {0}x{1}")]
    OddDimensions(usize, usize),
    #[error("optimizer step counter must start at 1")]
    InvalidStep,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("corrupt weights: {0}")]
    CorruptWeights(String),
    #[error("unsupported image format: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable identifier used in status reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ZeroSize => "ZeroSize",
            Error::DegenerateHistogram => "DegenerateHistogram",
            Error::EmptySelection => "EmptySelection",
            Error::EmptyMask => "EmptyMask",
            Error::SubsetViolation => "SubsetViolation",
            Error::CoreNotFound(_) => "CoreNotFound",
            Error::NoSample => "NoSample",
            Error::InvalidGeometry(_) => "InvalidGeometry",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NonFinite(_) => "NonFinite",
            Error::InsufficientStatistics => "InsufficientStatistics",
            Error::InvalidRate(_) => "InvalidRate",
            Error::OddDimensions(..) => "OddDimensions",
            Error::InvalidStep => "InvalidStep",
            Error::EmptyDataset => "EmptyDataset",
            Error::CorruptWeights(_) => "CorruptWeights",
            Error::Format(_) => "Format",
            Error::Config(_) => "Config",
            Error::Usage(_) => "Usage",
            Error::Io(_) => "Io",
        }
    }

    /// True for errors caused by invalid arguments, configuration or input
    /// files rather than by a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGeometry(_)
                | Error::InvalidConfig(_)
                | Error::InvalidRate(_)
                | Error::EmptyDataset
                | Error::CorruptWeights(_)
                | Error::Format(_)
                | Error::Config(_)
                | Error::Usage(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
