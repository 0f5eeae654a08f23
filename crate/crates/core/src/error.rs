use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("compartment {compartment} would become {value} at period {period} (population {population})")]
    NegativeCompartment { compartment: &'static str, value: f64, period: usize, population: f64 },

    #[error("panel error: {0}")]
    Panel(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("missing panel cell: region {region}, period {period}")]
    MissingCell { region: String, period: i64 },

    #[error("no identifying variation in the treatment regressor after two-way demeaning")]
    NoIdentifyingVariation,

    #[error("alternating demeaning did not converge after {iterations} iterations (max change {change:e})")]
    DemeanNotConverged { iterations: usize, change: f64 },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => ErrorCategory::Usage,
            Error::Panel(_) | Error::Schema(_) | Error::MissingCell { .. } | Error::Csv(_) | Error::Io(_) => {
                ErrorCategory::Data
            }
            Error::NegativeCompartment { .. }
            | Error::NoIdentifyingVariation
            | Error::DemeanNotConverged { .. }
            | Error::Estimation(_)
            | Error::Evaluation(_) => ErrorCategory::Numerical,
        }
    }
}
