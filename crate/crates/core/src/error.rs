use thiserror::Error;

/// Errors raised by the pricing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("invalid market data: {0}")]
    InvalidMarket(String),

    #[error("invalid product: {0}")]
    InvalidProduct(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("index {index} out of range (valid: {lo}..={hi})")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point {point:?} lies outside the domain")]
    PointOutsideDomain { point: Vec<f64> },

    #[error("non-finite value in stage {stage}, {position}")]
    NonFinite { stage: usize, position: String },

    #[error("grid with {nodes} nodes exceeds the node cap of {cap}")]
    GridTooLarge { nodes: usize, cap: usize },

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid combination plan: {0}")]
    InvalidPlan(String),

    #[error("component grid {levels:?} failed: {source}")]
    ComponentFailed {
        levels: Vec<u32>,
        #[source]
        source: Box<PdeError>,
    },
}

pub type Result<T> = std::result::Result<T, PdeError>;
