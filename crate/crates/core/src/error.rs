use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A recursion produced a non-finite value.
    #[error("non-finite value at index {index}: {what}")]
    Overflow { index: usize, what: String },

    #[error("parameters are not stationary: estimated top Lyapunov exponent {rho:.6} (s.e. {std_err:.6})")]
    NonStationary { rho: f64, std_err: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
