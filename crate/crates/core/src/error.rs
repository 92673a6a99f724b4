use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rate constraint violated: {0}")]
    RateConstraint(String),
    #[error("asset constraint violated: {0}")]
    AssetConstraint(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("beta rates required for the beta-measure regime")]
    MissingBeta,
    #[error("wrong collateral convention: expected {expected}, found {found}")]
    WrongConvention {
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid collateral map: {0}")]
    InvalidMap(String),
    #[error("flow at t={time} lies outside (0, {maturity}]")]
    FlowOutsideHorizon { time: f64, maturity: f64 },
    #[error("invalid contract: {0}")]
    InvalidContract(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("driver point shape mismatch: {0}")]
    Shape(String),
    #[error("incompatible generator pair: {0}")]
    IncompatiblePair(String),
    #[error("scale factor must be non-negative, got {0}")]
    NegativeScale(f64),
    #[error("non-finite {what} at step {step}, node {node}")]
    NonFinite {
        what: &'static str,
        step: usize,
        node: usize,
    },
    #[error("inadmissible request: {0}")]
    Inadmissible(String),
    #[error("degenerate asset spread at step {step}, node {node}")]
    DegenerateSpread { step: usize, node: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for errors caused by invalid input rather than numerical failure.
    pub fn is_config_error(&self) -> bool {
        !matches!(
            self,
            Error::NonFinite { .. } | Error::DegenerateSpread { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
