use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Transport,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate unit id `{0}`")]
    DuplicateId(String),

    #[error("unit `{unit}`: label `{label}` is not a level of variable `{variable}`")]
    UnknownGoldLabel {
        unit: String,
        variable: String,
        label: String,
    },

    #[error("unit `{unit}`: label `{label}` is not in the label set")]
    UnknownLabel { unit: String, label: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("invalid unit `{id}`: {reason}")]
    InvalidUnit { id: String, reason: String },

    #[error("invalid coding scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rank-deficient design: column `{column}` is collinear with {with:?}")]
    RankDeficient { column: String, with: Vec<String> },

    #[error("quasi-separation on `{covariate}`: |beta| exceeded {limit}")]
    Separation { covariate: String, limit: f64 },

    #[error("no convergence after {iterations} iterations; trace: {trace}")]
    NonConvergence { iterations: usize, trace: String },

    #[error("formula error: {0}")]
    Formula(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("bootstrap replicate {replicate} failed: {reason}")]
    Replicate { replicate: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidScheme(_) | Error::InvalidTemplate(_) | Error::Formula(_) => {
                ErrorKind::Config
            }
            Error::Transport(_) => ErrorKind::Transport,
            _ => ErrorKind::Data,
        }
    }
}
