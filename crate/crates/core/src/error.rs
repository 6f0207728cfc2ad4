use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // dataset ingest
    #[error("corpus at {0} contains no frame pairs")]
    EmptyCorpus(PathBuf),
    #[error("missing {modality} frames for subject {subject} sentence {sentence}")]
    MissingModality {
        subject: String,
        sentence: String,
        modality: &'static str,
    },
    #[error(
        "unequal frame counts for subject {subject} sentence {sentence}: face {face}, mri {mri} (no resampling rule given)"
    )]
    UnequalFrameCount {
        subject: String,
        sentence: String,
        face: usize,
        mri: usize,
    },
    #[error("consent scope is empty; ingestion refused")]
    EmptyConsentScope,
    #[error("consent scope does not permit {0}")]
    ConsentNotGranted(String),
    #[error("split would leave {test} test and {train} train frames out of {total}")]
    DegenerateSplit {
        total: usize,
        test: usize,
        train: usize,
    },
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidTestFraction(f64),
    #[error("undecodable frame {path}: {reason}")]
    UndecodableFrame { path: PathBuf, reason: String },

    // model
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),

    // trainer
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("train split is empty")]
    EmptyTrainSplit,
    #[error("frame {0} is assigned to the test split but reached the training loop")]
    DataLeakage(String),
    #[error("corrupt checkpoint at {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    // metrics
    #[error("metric input invalid: {0}")]
    MetricInput(String),
    #[error("matrix square root failed after jitter {0:e}")]
    SqrtmFailed(f64),
    #[error("feature extractor unavailable: {0}")]
    ExtractorUnavailable(String),

    // provenance
    #[error("no provenance block found")]
    MissingProvenance,
    #[error("provenance block tampered: {0}")]
    TamperedProvenance(String),
    #[error("provenance block corrupt: {0}")]
    CorruptProvenance(String),
    #[error("model hash {0:?} is not a 64-character lowercase hex digest")]
    HashFormat(String),
    #[error("invalid provenance record: {0}")]
    InvalidRecord(String),
    #[error("unsupported container format for embedded provenance")]
    UnsupportedContainer,
    #[error("{path} is presented as generated output but carries no valid provenance: {reason}")]
    UntaggedGenerated { path: PathBuf, reason: String },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by operator input or policy refusals, as
    /// opposed to internal failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonFinite(_) | Error::SqrtmFailed(_) | Error::Io { .. } | Error::Json(_)
        )
    }
}
