use thiserror::Error;

pub type Result<T, E = MoldError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoldError {
    /// A plant, controller or simulation parameter violates its invariant.
    /// `constraint` is the violated condition, e.g. `"R > 0"`.
    #[error("invalid parameter: {constraint} (got {value})")]
    InvalidParameter { constraint: String, value: f64 },

    /// The screw position reached the `x1 > 0` singularity of the model.
    #[error("singular state: screw position x1 = {x1} must stay > 0")]
    Singularity { x1: f64 },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    /// The input coefficient of the fourth output derivative is too small to invert.
    #[error("degenerate decoupling: |L_g L_f^3 h| = {value:e} below threshold {threshold:e}")]
    DegenerateDecoupling { value: f64, threshold: f64 },

    #[error("lie derivative order {0} out of range")]
    OrderOutOfRange(usize),

    #[error("invalid reference profile: {0}")]
    InvalidProfile(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl MoldError {
    pub(crate) fn param(constraint: impl Into<String>, value: f64) -> Self {
        MoldError::InvalidParameter {
            constraint: constraint.into(),
            value,
        }
    }
}
