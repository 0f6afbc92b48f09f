use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate integration range [{lo}, {hi}]")]
    DegenerateRange { lo: f64, hi: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("NaN input to {0}")]
    NanInput(&'static str),

    #[error("no flux: {0}")]
    NoFlux(&'static str),

    #[error("grid undersampled: spacing {spacing:e} m, required grid pitch <= {required:e} m")]
    Undersampled { spacing: f64, required: f64 },

    #[error("wire at {center:e} m lies outside the profile extent [{lo:e}, {hi:e}]")]
    WireOutsideGrid { center: f64, lo: f64, hi: f64 },

    #[error("initial packet overlaps the obstacle (overlap norm {0:e})")]
    PacketOverlap(f64),

    #[error("time step {dt:e} exceeds the stability bound {max:e}")]
    TimeStep { dt: f64, max: f64 },

    #[error("instability detected at t = {time}: norm drift {drift:e}")]
    Instability { time: f64, drift: f64 },

    #[error("degenerate: {0}")]
    Degenerate(&'static str),

    #[error("config: {field}: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that stem from bad configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidParameter { .. } | Error::Json(_)
        )
    }
}
