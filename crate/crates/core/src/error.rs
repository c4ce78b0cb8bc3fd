use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time {t} outside valid interval [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },

    #[error("spline fit failed: knot interval {interval} ([{start}, {end}) s) contains no samples")]
    EmptyKnotInterval { interval: usize, start: f64, end: f64 },

    #[error("spline fit failed: {0}")]
    Fit(String),

    #[error("root is not bracketed: f({a}) = {fa}, f({b}) = {fb}")]
    NoBracket { a: f64, b: f64, fa: f64, fb: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("degenerate weight: predicted residual variance is zero; supply a positive noise level")]
    DegenerateWeight,

    #[error("point behind camera (depth {depth})")]
    Cheirality { depth: f64 },

    #[error("problem build failed: {0}")]
    Build(String),

    #[error("solver aborted: {0}")]
    Solver(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
