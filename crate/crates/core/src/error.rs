use thiserror::Error;

/// Errors raised by the numerical engine and its configuration layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("evaluator is not a norm: {0}")]
    NotANorm(String),

    #[error(
        "domain too small for this h: on-grid kernel mass {on_grid:.6} is below 0.9 x {total:.6}"
    )]
    DomainTooSmall { on_grid: f64, total: f64 },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("direct convolution is limited to {limit} cells, got {cells}")]
    SizeGuard { cells: usize, limit: usize },

    #[error("point is not on the boundary (distance {distance:.3e} exceeds {tolerance:.3e})")]
    NotOnBoundary { distance: f64, tolerance: f64 },

    #[error("ambiguous boundary point: {0}")]
    AmbiguousBoundary(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error(
        "resolution guard: kernel scale {scale:.4e} is below {required:.4e} (3 grid cells)"
    )]
    Resolution { scale: f64, required: f64 },

    #[error("set is {0}; a nonempty boundary is required")]
    DegenerateSet(&'static str),

    #[error("containment violated: first set is not a subset of the second")]
    Containment,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
