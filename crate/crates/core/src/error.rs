use std::path::PathBuf;

/// Every failure the library can report. Variant names follow the error
/// codes used throughout the docs (`E_CONFIG`, `E_SHAPE`, ...).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("E_CONFIG: {0}")]
    Config(String),

    #[error("E_SHAPE: {what}: expected {expected:?}, got {actual:?}")]
    Shape {
        what: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("E_WINDOW: stage side {side} is not divisible by window size {window}")]
    Window { side: usize, window: usize },

    #[error("E_NODE: decoder feature {0} is not available")]
    Node(String),

    #[error("E_EVAL: knowledge can only be updated in training mode")]
    Eval,

    #[error("E_MODE: fusion mode {0} is not valid here")]
    Mode(String),

    #[error("E_ZERO_MAP: map has zero mass")]
    ZeroMap,

    #[error("E_DOMAIN: {0}")]
    Domain(String),

    #[error("E_CONST_MAP: map has zero standard deviation")]
    ConstMap,

    #[error("E_NOT_NORMALIZED: map sums to {0}, expected 1")]
    NotNormalized(f64),

    #[error("E_EMPTY_FIX: fixation set is empty")]
    EmptyFix,

    #[error("E_MISSING_PAIR: sample `{0}` has no matching frame/map")]
    MissingPair(String),

    #[error("E_EMPTY_DATASET: {0}")]
    EmptyDataset(String),

    #[error("E_NAN_LOSS: non-finite loss at step {step}\n{diagnostics}")]
    NanLoss { step: u64, diagnostics: String },

    #[error("E_IO: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("E_VERSION: {0}")]
    Version(String),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("tensor: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(what: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
