use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("asymmetry function is not positive ({value}) for bidder {bidder}")]
    NonPositiveLambda { bidder: usize, value: f64 },

    #[error("unknown bidder label {0}")]
    UnknownLabel(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quantile level {tau} outside the curve grid [{lo}, {hi}]")]
    OutsideGrid { tau: f64, lo: f64, hi: f64 },

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize, best: Vec<f64> },

    #[error("likelihood is flat: no auction carries information on the asymmetry parameters")]
    FlatLikelihood,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("linear program is unbounded (quantile levels outside [0, 1]?)")]
    Unbounded,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("no cell with more than {min_cell} asymmetric auctions")]
    NoQualifyingCells { min_cell: usize },

    #[error("bootstrap aborted: {failures} of {total} replicates failed")]
    BootstrapAborted { failures: usize, total: usize },

    #[error("row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Coarse class used by the command-line front end to select an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Data { .. } | Error::MissingColumn(_) | Error::Io(_) | Error::InvalidParameter(_) => {
                ErrorClass::Input
            }
            Error::BootstrapAborted { .. } => ErrorClass::TestAbort,
            _ => ErrorClass::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
    TestAbort,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
