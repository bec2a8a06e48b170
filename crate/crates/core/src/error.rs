use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("{what} is numerically singular at {at}")]
    Singular { what: String, at: String },

    #[error("{what} is rank deficient (rank {rank}, expected {expected})")]
    RankDeficient {
        what: String,
        rank: usize,
        expected: usize,
    },

    #[error("{0} not positive definite")]
    NotPositiveDefinite(String),

    #[error("{what} is not {property} (deviation {deviation:.3e})")]
    Structure {
        what: String,
        property: &'static str,
        deviation: f64,
    },

    #[error("eigenvalue computation failed for {0}")]
    Eigen(String),

    #[error("energy Hessian not positive definite: eigenvalue {min_eig:.6e} at state {witness:?}, t = {t}")]
    NonConvex { min_eig: f64, witness: Vec<f64>, t: f64 },

    #[error("simulation diverged at t = {time} (step {step})")]
    Divergence { time: f64, step: usize },

    #[error("time {t} outside table range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("gate `{gate}` failed: {value:.3e} exceeds {limit:.1e}")]
    Gate {
        gate: String,
        value: f64,
        limit: f64,
    },

    #[error("design not certified: {0}")]
    Uncertified(String),

    #[error("degenerate coupling: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            got,
        }
    }
}
