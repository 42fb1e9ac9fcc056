use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// No pair of uncertainties inside the unit ball reproduces the data.
    #[error("empty a posteriori set: consistency value {consistency} exceeds 1")]
    EmptyAposterioriSet { consistency: f64 },

    /// The direction is not in `R(L*) + R(H*)`; its error is unbounded.
    #[error("inadmissible direction: distance {residual:e} to R(L*)+R(H*)")]
    InadmissibleDirection { residual: f64 },

    #[error("pencil is not index 1: C4 condition number {condition:e} exceeds 1e8")]
    IndexNotOne { condition: f64 },

    /// Block elimination met a (numerically) singular pivot. Usually the
    /// grid is too coarse for the stiffness of the system.
    #[error("singular block pivot at node {node}; refine the grid")]
    SingularPivot { node: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
