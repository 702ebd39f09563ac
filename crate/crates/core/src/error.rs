use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain of its family or operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// NaN or otherwise malformed numeric input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Conditioning value at 0 or 1 where a conditional cdf is undefined.
    #[error("degenerate conditioning value u1 = {0}")]
    Boundary(f64),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("unsupported structure: {0}")]
    Unsupported(String),

    /// Violations of the response-matrix or cutpoint invariants.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
