use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by the parsing pipeline and its building blocks.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A tensor fed into a layer does not have the dims the layer expects.
    #[error("layer {layer} ({kind}): {detail}")]
    LayerMismatch {
        layer: usize,
        kind: &'static str,
        detail: String,
    },

    /// Two buffers that must agree in length do not.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Two grids that must agree in dims do not.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A configuration value is out of its valid range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A NaN or infinity appeared where only finite values are allowed.
    #[error("non-finite value in {context}{}", fmt_layer(.layer))]
    NonFinite {
        context: &'static str,
        layer: Option<usize>,
    },

    /// A statistic degenerated (for example a zero spread) and the
    /// operation cannot continue.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A coefficient or shape vector is in the wrong normalization space.
    #[error("wrong space: expected {expected} values")]
    WrongSpace { expected: &'static str },

    /// A label index exceeds the configured label count.
    #[error("label {label} out of range (K = {k})")]
    LabelOutOfRange { label: usize, k: usize },

    /// A required artifact (dictionary, checkpoint, dataset entry) is absent.
    #[error("missing artifact: {0}")]
    Missing(String),

    /// A file exists but its contents do not parse as the expected format.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_layer(layer: &Option<usize>) -> String {
    match layer {
        Some(i) => format!(" (layer {i})"),
        None => String::new(),
    }
}

impl Error {
    pub fn format(path: impl fmt::Display, detail: impl fmt::Display) -> Self {
        Error::Format {
            path: path.to_string(),
            detail: detail.to_string(),
        }
    }

    /// True for errors caused by the machine environment rather than by
    /// invalid inputs; the CLI maps these to a distinct exit code.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Format { .. } | Error::Missing(_))
    }
}
