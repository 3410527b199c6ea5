use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    Empty,
    #[error("embedding dimension must be at least 1")]
    ZeroDimension,
    #[error("row {row} has {found} values, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("got {labels} labels for {rows} rows")]
    LabelCountMismatch { rows: usize, labels: usize },

    #[error("row {row} has zero norm, cosine distance is undefined")]
    ZeroNorm { row: usize },
    #[error("query vector has zero norm, cosine distance is undefined")]
    ZeroNormQuery,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds gallery size {gallery}")]
    KTooLarge { k: usize, gallery: usize },
    #[error("row {row} is out of range for {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("query has {found} dimensions, index has {expected}")]
    QueryDimension { expected: usize, found: usize },

    #[error("recall needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("label {label:?} has a single sample")]
    SingletonLabel { label: String },
    #[error("no evaluable queries: every label has a single sample")]
    NoEvaluableQueries,
    #[error("group size must be at least 1")]
    ZeroGroupSize,
    #[error("{labels} labels cannot fill a group of {group_size}")]
    NotEnoughLabels { labels: usize, group_size: usize },
    #[error("{labels} labels leave {remainder} over for group size {group_size}")]
    Remainder {
        labels: usize,
        group_size: usize,
        remainder: usize,
    },
    #[error("group {index}: {source}")]
    Group { index: usize, source: Box<Error> },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("confidence interval needs at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("reports are not comparable: {0}")]
    ReportMismatch(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("{}: {error}", path.display())]
    Io { path: PathBuf, error: std::io::Error },
    #[error("bad magic bytes, not a GREC binary dataset")]
    BadMagic,
    #[error("unsupported binary dataset version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated {section}: expected {expected} bytes, found {actual}")]
    Truncated {
        section: &'static str,
        expected: u64,
        actual: u64,
    },
    #[error("label {row} is not valid UTF-8")]
    InvalidLabelEncoding { row: usize },
    #[error("non-numeric cell {value:?} at row {row}, column {col}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("more than one `label` column in header")]
    DuplicateLabelColumn,
    #[error("no labels: the file has no label column and no sidecar was given")]
    MissingLabels,
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    /// True when the error indicates a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::Internal(_) => true,
            Error::Group { source, .. } => source.is_internal(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            error: source,
        }
    }
}
