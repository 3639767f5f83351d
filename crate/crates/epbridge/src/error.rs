use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or model parameter outside its support.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// Cholesky failed even after the largest ridge jitter.
    #[error("matrix not positive definite after jitter (min diagonal {min_diag:e})")]
    Singular { min_diag: f64 },

    /// A numerical failure inside a sampler sweep.
    #[error("iteration {iter}: {source}")]
    AtIteration {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    /// A failure along a hyper-parameter path.
    #[error("grid point {index}: {source}")]
    AtGridPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Empirical-Bayes update on an all-zero estimate.
    #[error("empirical Bayes update undefined: all coefficients are zero")]
    DegenerateEb,

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input; `line` is 1-based and counts the header.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by arithmetic rather than by bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Singular { .. } | Error::DegenerateEb => true,
            Error::AtIteration { source, .. } | Error::AtGridPoint { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
