use thiserror::Error;

/// Errors raised by the sampling library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("drift envelope unsatisfiable: nonnegative mean drift")]
    EnvelopeUnsatisfiable,

    #[error("no drift envelope fitted; call fit_envelope or supply (d, gamma_bar)")]
    MissingEnvelope,

    #[error("infinite-horizon reversal requires periodicity")]
    ReversalNeedsPeriod,

    #[error("no feasible segment length for theta = {theta}; choose a smaller theta")]
    InfeasibleTheta { theta: f64 },

    #[error("sampler would not terminate: {0}")]
    NonTerminating(String),

    /// A local bound turned out to be violated while testing a proposal.
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Returns an error unless `value` is finite and strictly positive.
pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}
