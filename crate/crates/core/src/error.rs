use std::io;

use thiserror::Error;

/// Errors produced by the platoon library.
#[derive(Debug, Error)]
pub enum Error {
    /// A state, input or parameter was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A scenario document failed validation.
    #[error("scenario validation failed: {0}")]
    Validation(String),

    /// The simulation left the admissible state envelope.
    #[error("simulation diverged at t = {time} s: vehicle {vehicle} has |{quantity}| = {value:e}")]
    Divergence {
        time: f64,
        vehicle: usize,
        quantity: &'static str,
        value: f64,
    },

    #[error(
        "message sent at t = {send_time} s precedes the previous send at t = {last_send_time} s"
    )]
    OutOfOrderSend { send_time: f64, last_send_time: f64 },

    #[error(
        "distance vector covers indices {got_from}..={got_to}, expected {want_from}..={want_to}"
    )]
    IndexMismatch {
        got_from: usize,
        got_to: usize,
        want_from: usize,
        want_to: usize,
    },

    /// The closed loop is not asymptotically stable.
    #[error("closed loop is unstable (max real eigenvalue {max_real_part:e})")]
    Unstable { max_real_part: f64 },

    #[error("step response did not settle within {horizon} s")]
    NotSettled { horizon: f64 },

    #[error("no feasible k_p above {floor}")]
    NoFeasibleGain { floor: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, what: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
