use thiserror::Error;

/// Failure modes shared by every kernel and layer in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value encountered in {op}")]
    NonFinite { op: &'static str },

    #[error("{op} failed to converge (iteration {iteration})")]
    Convergence { op: &'static str, iteration: usize },

    #[error("{op}: input is not symmetric (relative asymmetry {asymmetry:e})")]
    Asymmetric { op: &'static str, asymmetry: f64 },

    #[error("{op}: eigenvalue {value:e} is negative beyond the clamp tolerance")]
    Domain { op: &'static str, value: f64 },

    #[error("{op}: matrix is numerically rank deficient (largest eigenvalue {largest:e}, floor {floor:e})")]
    Rank { op: &'static str, largest: f64, floor: f64 },

    #[error("degenerate spectrum: eigenvalues {i} and {j} differ by {gap:e}")]
    DegenerateSpectrum { i: usize, j: usize, gap: f64 },

    #[error("{op}: degenerate input ({detail})")]
    Degenerate { op: &'static str, detail: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid size: {0}")]
    Size(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
