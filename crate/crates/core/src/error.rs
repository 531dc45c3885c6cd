use thiserror::Error;

pub type Result<T> = std::result::Result<T, EekError>;

#[derive(Debug, Error)]
pub enum EekError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error in `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("unsupported derivative order {0} (at most 2)")]
    UnsupportedOrder(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("hyperbolicity violated: sigma^2 = {sigma2} >= 1")]
    Hyperbolicity { sigma2: f64 },

    #[error("outside the admissible region: {0}")]
    RegionViolation(String),

    #[error("metric is singular at grid point {location:?}")]
    SingularMetric { location: [usize; 3] },

    #[error("metric is not positive definite at grid point {location:?}")]
    NotPositiveDefinite { location: [usize; 3] },

    #[error("Brill-Cantor condition fails: lambda_min = {lambda_min:e}")]
    BrillCantor { lambda_min: f64 },

    #[error("{stage}: no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence {
        stage: String,
        iterations: usize,
        residual: f64,
    },

    #[error("CFL violated: dt = {dt:e} exceeds the limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite value at t = {time}, grid point {location:?}, component {component}")]
    NonFinite {
        time: f64,
        location: [usize; 3],
        component: usize,
    },

    #[error("{stage}: {detail}")]
    Numerical { stage: String, detail: String },
}

impl EekError {
    /// Numerical failures map to exit code 3; everything else is a validation failure.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            EekError::Convergence { .. }
                | EekError::Cfl { .. }
                | EekError::NonFinite { .. }
                | EekError::Numerical { .. }
                | EekError::SingularMetric { .. }
        )
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        EekError::InvalidArgument(msg.into())
    }
}
