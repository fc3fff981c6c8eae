use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("insufficient history: need at least {needed} snapshots, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("segment [{lo}, {hi}] is too short to split")]
    Unsplittable { lo: usize, hi: usize },

    #[error("no stable cluster-count run found over {candidates} candidates")]
    Unstable { candidates: usize },

    #[error("coefficient of variation undefined: mean is zero")]
    UndefinedCv,

    #[error("empty cluster")]
    EmptyCluster,

    #[error("MAPE undefined: every actual value is zero")]
    MapeUndefined,

    #[error("not found: {0}")]
    NotFound(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps an error with the name of the pipeline stage that raised it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self.root() {
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateDataset(_) => "degenerate_dataset",
            Error::InsufficientHistory { .. } => "insufficient_history",
            Error::Unsplittable { .. } => "unsplittable",
            Error::Unstable { .. } => "unstable",
            Error::UndefinedCv => "undefined_cv",
            Error::EmptyCluster => "empty_cluster",
            Error::MapeUndefined => "mape_undefined",
            Error::NotFound(_) => "not_found",
            Error::Stage { .. } => unreachable!("root is never a stage"),
        }
    }
}
