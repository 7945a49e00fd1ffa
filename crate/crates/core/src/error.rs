use thiserror::Error;

pub type Result<T> = std::result::Result<T, PatchError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatchError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("{points} lattice points is not a multiple of the diffusivity period {period}")]
    PeriodMismatch { points: usize, period: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("incompatible configuration: {0}")]
    Incompatible(String),

    #[error("operator is not symmetric: relative defect {defect:e} exceeds {tolerance:e}")]
    NotSymmetric { defect: f64, tolerance: f64 },

    #[error("slow branch is not separated from the fast branches at k = {k}")]
    BranchSeparation { k: f64 },

    #[error("slow-branch series residual {residual:e} exceeds {tolerance:e}")]
    FitResidual { residual: f64, tolerance: f64 },

    #[error("need {needed} macroscale modes but only {available} are available")]
    InsufficientModes { needed: usize, available: usize },

    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    UnstableStep { dt: f64, limit: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl PatchError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        PatchError::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
