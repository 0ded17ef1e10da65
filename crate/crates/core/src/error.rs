use alloc::string::String;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("row {row} of the composition is invalid: {reason}")]
    InvalidComposition { row: usize, reason: String },
    #[error("row {0} of the composition is entirely zero")]
    ZeroRow(usize),
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("column {column} of {block} is constant and vanishes after centering")]
    DegenerateColumn { block: &'static str, column: usize },
    #[error("vertex index {index} out of range for {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("singular system: {0}")]
    Singular(&'static str),
    #[error("no fit along the path converged")]
    NoConvergedFit,
    #[error("unknown design `{0}`")]
    UnknownDesign(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
