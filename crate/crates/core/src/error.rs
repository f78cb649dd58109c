use thiserror::Error;

/// Failures surfaced by the library.
///
/// Variants split into caller mistakes (bad arguments, dimension clashes) and
/// numeric breakdowns; the CLI maps the former to exit code 2 and the latter to 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported order: {vanishing_moments} vanishing moments (supported: 1..=20)")]
    UnsupportedOrder { vanishing_moments: usize },

    #[error("derivative order {order} exceeds the regularity of the filter (max {max})")]
    RegularityExceeded { order: usize, max: usize },

    #[error("no eigenvalue within tolerance of {target} (smallest singular value {residual:e})")]
    EigenSolveFailure { target: f64, residual: f64 },

    #[error("derivative order {order} unavailable (table holds orders 0..={max})")]
    DerivativeUnavailable { order: usize, max: usize },

    #[error("base interpolant residual {residual:e} exceeds tolerance {tolerance:e}")]
    BaseFitTooLoose { residual: f64, tolerance: f64 },

    #[error("filter construction did not converge (residual {residual:e})")]
    FilterConvergence { residual: f64 },

    #[error("grid too coarse: resolution level {resolution} needs at least {required}")]
    GridTooCoarse { resolution: u32, required: u32 },

    #[error("regularity grid too large: {required} points exceed the cap of {cap}")]
    GridTooLarge { required: u128, cap: u128 },

    #[error("point {index} lies outside the domain (norm {norm} > {limit})")]
    PointOutOfDomain { index: usize, norm: f64, limit: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    /// True for errors caused by invalid input rather than numeric breakdown.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::UnsupportedOrder { .. }
                | Error::RegularityExceeded { .. }
                | Error::DerivativeUnavailable { .. }
                | Error::GridTooCoarse { .. }
                | Error::GridTooLarge { .. }
                | Error::PointOutOfDomain { .. }
                | Error::DimensionMismatch(_)
                | Error::InvalidParams(_)
                | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
