use thiserror::Error;

/// Errors produced anywhere in the learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("kernel table is not symmetric (max asymmetry {asymmetry:.3e})")]
    NonSymmetricKernel { asymmetry: f64 },

    #[error("kernel is not positive semidefinite (smallest eigenvalue {eigenvalue:.3e})")]
    IndefiniteKernel { eigenvalue: f64 },

    #[error("eigen-solve failed: {0}")]
    EigenFailure(String),

    #[error("box {0} does not contain any grid node")]
    EmptyRestriction(String),

    #[error("covariance matrix C is numerically singular: eigenvalue {eigenvalue:.3e} below floor {floor:.3e}")]
    SingularCovariance { eigenvalue: f64, floor: f64 },

    #[error("Omega_1 is rank deficient (smallest singular value {smallest:.3e})")]
    RankDeficient { smallest: f64 },

    #[error("coefficient field is not SPD at node {node} (smallest eigenvalue {eigenvalue:.3e})")]
    CoefficientNotSpd { node: usize, eigenvalue: f64 },

    #[error("unsupported coefficient field: {0}")]
    UnsupportedCoefficient(String),

    #[error("solver breakdown: {0}")]
    SolverBreakdown(String),

    #[error("dense reference refused: {unknowns} unknowns exceed the cap of {cap}")]
    DenseCapExceeded { unknowns: usize, cap: usize },

    #[error("partition too large: {splits} total splits exceed 24")]
    PartitionTooLarge { splits: usize },

    #[error("oracle failure while learning block {block}: {source}")]
    Oracle {
        block: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({0}) lies outside the grid")]
    OutsideDomain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
