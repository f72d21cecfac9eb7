use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("constraint graph is not regular: weighted degrees span [{min}, {max}]")]
    NotRegular { min: f64, max: f64 },

    #[error("relation on constraint {index} is not a bijection")]
    NotBijection { index: usize },

    #[error("subset {0:?} is not available in this family")]
    UnavailableSubset(Vec<usize>),

    #[error("conditioning event has probability {0:e}")]
    ZeroProbability(f64),

    #[error("budget exceeded: {needed} vertices requested, family stores tables on at most {available}")]
    Budget { needed: usize, available: usize },

    #[error("matrix is not positive semidefinite: minimum eigenvalue {0:e}")]
    NotPsd(f64),

    #[error("{what} is {size}, above the cap of {cap}")]
    Cap {
        what: &'static str,
        size: f64,
        cap: f64,
    },

    #[error("projector rule leaves {0:e} of a selected vector")]
    ProjectorRule(f64),

    #[error("label vectors of vertex {vertex} are not orthogonal (inner product {value:e})")]
    Orthogonality { vertex: usize, value: f64 },

    #[error("vectors disagree with the family's pair probabilities by {0:e}")]
    Inconsistent(f64),

    #[error("schema mismatch: expected version {expected}, found {found}")]
    Schema { expected: u32, found: u32 },

    #[error("{0}")]
    Invariant(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
