use thiserror::Error;

/// Errors raised by the model, fitting and I/O layers.
#[derive(Debug, Error)]
pub enum EnmoError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The ancilla loss term of the CQNC spectrum divides by the squared
    /// ancilla detuning.
    #[error("singular configuration: ancilla detuning is zero (the loss term divides by delta_a^2)")]
    SingularDetuning,

    #[error("covariance is not positive definite (vxx={vxx}, vpp={vpp}, vxp={vxp}, det={det})")]
    NotPositiveDefinite { vxx: f64, vpp: f64, vxp: f64, det: f64 },

    #[error("shot noise does not exceed dark noise at {frequency_hz} Hz")]
    ShotBelowDark { frequency_hz: f64 },

    #[error("no squeezing: {0}")]
    NoSqueezing(String),

    #[error("unphysical squeeze/anti-squeeze pair: {0}")]
    UnphysicalPair(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, EnmoError>;

pub(crate) fn finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EnmoError::NonFinite(what))
    }
}
