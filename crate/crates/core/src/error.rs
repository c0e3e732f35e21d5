use thiserror::Error;

/// Errors produced anywhere in the localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("map mismatch: {0}")]
    Mismatch(String),

    #[error("degenerate traffic model: the generated map sums to zero")]
    DegenerateTrafficModel,

    #[error("invalid KPI pair for cell {cell}: amt {amt} < hmt {hmt}")]
    InvalidKpiPair { cell: String, amt: f64, hmt: f64 },

    #[error("map is not normalized (sum = {sum})")]
    Unnormalized { sum: f64 },

    #[error("nnls did not converge after {iterations} iterations (best residual {residual})")]
    MaxIterExceeded {
        best: Vec<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error("invalid config at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("empty system: {0}")]
    EmptySystem(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
