use thiserror::Error;

/// Errors raised by the inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs disagree on dimensions, carry out-of-range values, or violate a
    /// documented precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// A pairwise term violates θ00 + θ11 ≤ θ01 + θ10.
    #[error("pairwise term ({i}, {j}) is not submodular (violation {violation})")]
    NonSubmodular { i: usize, j: usize, violation: f64 },

    /// Every state of some variable is forbidden.
    #[error("variable {0} has no feasible label")]
    Infeasible(usize),

    /// The instance is above the size an exhaustive or O(n²) routine accepts.
    #[error("instance too large: {what} is {actual}, limit {limit}")]
    SizeGuard { what: &'static str, actual: usize, limit: usize },

    /// The requested quantity is not defined for these inputs.
    #[error("undefined result: {0}")]
    Undefined(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
