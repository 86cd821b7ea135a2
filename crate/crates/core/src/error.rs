use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{param}` for {family}: {reason}")]
    InvalidParameter {
        family: String,
        param: String,
        reason: String,
    },

    #[error("non-finite {quantity} at x = {x:?}")]
    NonFinite { quantity: &'static str, x: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("r(x, y) is undefined on the diagonal (|x - y| = {separation:e})")]
    DiagonalUndefined { separation: f64 },

    #[error("unsupported dimension {d}: {reason}")]
    UnsupportedDimension { d: usize, reason: String },

    #[error("support box is missing or not finite")]
    UnboundedSupport,

    #[error("quadrature did not reach tolerance: estimate {estimate:e}, error estimate {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("trajectory escaped the blowup guard at t = {time}")]
    Blowup { time: f64 },

    #[error("grid too coarse: cell width {cell:e} exceeds {limit:e}")]
    Resolution { cell: f64, limit: f64 },

    #[error("regularized density underflows at x = {x:?}")]
    DomainTruncation { x: Vec<f64> },

    #[error("diffusion violates the 9-point positivity condition at {violating} of {total} cells (first offending cells: {cells:?})")]
    Anisotropy {
        violating: usize,
        total: usize,
        cells: Vec<(usize, usize)>,
    },

    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("unsupported degeneracy: {0}")]
    UnsupportedDegeneracy(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(family: &str, param: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            family: family.to_string(),
            param: param.to_string(),
            reason: reason.into(),
        }
    }
}

/// First-error slot for closures that must return plain `f64`.
#[derive(Debug, Default)]
pub(crate) struct ErrorSlot(std::sync::Mutex<Option<Error>>);

impl ErrorSlot {
    pub fn set(&self, e: Error) {
        let mut g = self.0.lock().unwrap_or_else(|p| p.into_inner());
        if g.is_none() {
            *g = Some(e);
        }
    }

    pub fn take(&self) -> Option<Error> {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).take()
    }
}
