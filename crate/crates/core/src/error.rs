use std::path::PathBuf;

/// Errors produced anywhere in the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("word pool: {0}")]
    WordPool(String),

    #[error("norms row {row}: {message}")]
    NormsRow { row: usize, message: String },

    #[error("stimulus: {0}")]
    Stimulus(String),

    #[error("protocol violation for {context} at token {token_index}: {message}")]
    Protocol {
        context: String,
        token_index: usize,
        message: String,
    },

    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("server rejected request ({status}): {message}")]
    Server { status: u16, message: String },

    #[error("alignment for vignette {vignette}: {message}")]
    Alignment { vignette: String, message: String },

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("step grids differ: {0}")]
    GridMismatch(String),

    #[error("toy model: {0}")]
    Toy(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("benchmark row {row} in {file}: {message}")]
    Benchmark {
        file: String,
        row: usize,
        message: String,
    },

    #[error("no results")]
    NoResults,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
