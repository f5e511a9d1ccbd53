use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid bandwidth {0}: must be finite and > 0")]
    InvalidBandwidth(f64),

    #[error("empty neighborhood: no observation has positive kernel weight around w0 = {w0:?}")]
    EmptyNeighborhood { w0: Vec<f64> },

    #[error("degenerate design: {block} block unidentified ({detail})")]
    DegenerateDesign { block: String, detail: String },

    #[error("quantile regression solver failed: {0}")]
    SolverFailed(String),

    #[error("contour assembly failed: {failed} of {total} directions could not be fitted (first error: {first})")]
    ContourFailure {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidDirection(_) => "invalid_direction",
            Error::UnsupportedDimension(_) => "unsupported_dimension",
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidBandwidth(_) => "invalid_bandwidth",
            Error::EmptyNeighborhood { .. } => "empty_neighborhood",
            Error::DegenerateDesign { .. } => "degenerate_design",
            Error::SolverFailed(_) => "solver_failed",
            Error::ContourFailure { .. } => "contour_failure",
            Error::Ingestion { .. } => "ingestion",
            Error::Io(_) => "io",
        }
    }

    /// Name of the module the error originates from.
    pub fn module(&self) -> &'static str {
        match self {
            Error::InvalidDirection(_) | Error::UnsupportedDimension(_) => "geometry",
            Error::InvalidBandwidth(_) | Error::EmptyNeighborhood { .. } => "kernels",
            Error::DegenerateDesign { .. } => "estimators",
            Error::SolverFailed(_) => "qr_solver",
            Error::ContourFailure { .. } => "contours",
            Error::Ingestion { .. } => "simlab",
            Error::InvalidInput(_) => "input",
            Error::Io(_) => "io",
        }
    }
}
