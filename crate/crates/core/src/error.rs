use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate box: width {w} and height {h} must both be at least {min}")]
    DegenerateBox { w: f64, h: f64, min: f64 },

    #[error("non-finite box coordinate")]
    NonFiniteBox,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("finite-difference step {step} produces a degenerate box even after shrinking")]
    StepTooLarge { step: f64 },

    #[error("dataset contains no boxes")]
    EmptyDataset,

    #[error("average precision is undefined: no category has any ground truth")]
    NoGroundTruth,

    #[error("unknown image ids referenced: {0:?}")]
    UnknownImages(Vec<u64>),

    #[error("annotation {index}: {source}")]
    BadAnnotation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
