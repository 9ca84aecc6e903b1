use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("sector dimension {dim} exceeds the cap of {cap}")]
    SectorTooLarge { dim: usize, cap: usize },

    #[error("dispersion has imaginary part {imag:e} at k index {k_index}")]
    ComplexLeak { k_index: usize, imag: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

impl Error {
    /// Short machine-readable tag used in structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::SectorTooLarge { .. } => "SectorTooLarge",
            Error::ComplexLeak { .. } => "ComplexLeak",
            Error::DegenerateFit(_) => "DegenerateFit",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
