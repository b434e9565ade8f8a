use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("integration blew up at t = {time}")]
    Blowup { time: f64 },

    #[error("degenerate pair ({i}, {j}): |C(x_i) - C(x_j)| = {gap:e} is below the threshold")]
    DegeneratePair { i: usize, j: usize, gap: f64 },

    #[error("g(y) vanishes at index {index}: |g| = {value:e} is below the threshold")]
    GZero { index: usize, value: f64 },

    #[error("bound is unbounded: denominator magnitude {denominator:e} is below the threshold")]
    Unbounded { denominator: f64 },

    #[error("no matched pairs found")]
    NoMatchedPairs,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("expression parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for the identifiability failures: violated theorem hypotheses or
    /// an empty pair search.
    pub fn is_identifiability(&self) -> bool {
        matches!(
            self,
            Error::DegeneratePair { .. }
                | Error::GZero { .. }
                | Error::Unbounded { .. }
                | Error::NoMatchedPairs
        )
    }
}
