use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("assumption violated for `{field}`: measured decay exponent {measured:.3}, claimed {claimed:.3} (radius {radius:.2})")]
    Assumption {
        field: &'static str,
        claimed: f64,
        measured: f64,
        radius: f64,
    },
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("conjugate operator error: {0}")]
    Conjugate(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("horizon error: {0}")]
    Horizon(String),
    #[error("limiting absorption error: {0}")]
    Lap(String),
    #[error("accuracy error: {0}")]
    Accuracy(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("solve error: {0}")]
    Solve(String),
    #[error("quadrature error: {0}")]
    Quadrature(String),
    #[error("filter error: {0}")]
    Filter(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
