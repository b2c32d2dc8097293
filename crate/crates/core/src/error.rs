use thiserror::Error;

/// Errors raised by every stage of the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("field value exactly zero at vertex {vertex}; resample")]
    Tie { vertex: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("point swallowed at time {time}")]
    Swallowed { time: f64 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("hull collapse: path touches the real line at step {step}")]
    HullCollapse { step: usize },
    #[error("support error: {0}")]
    Support(String),
    #[error("refinement required: {0}")]
    Refine(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("rule `{0}` needs an auxiliary seed")]
    SeedRequired(String),
    #[error("time grids do not match: {0}")]
    Resample(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
