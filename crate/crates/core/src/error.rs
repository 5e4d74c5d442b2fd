use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("could not parse signal `{input}`: {reason}")]
    SignalParse { input: String, reason: String },

    #[error("step size underflow at t = {t} (|x| = {norm:e})")]
    StepSizeUnderflow { t: f64, norm: f64 },

    #[error("step limit reached at t = {t}")]
    TooManySteps { t: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("fundamental matrix numerically singular at t = {t}")]
    SingularTransition { t: f64 },

    #[error("exponent fit not valid: decay rate v1 = {v1} is not positive")]
    NonPositiveDecay { v1: f64 },

    #[error("bracket does not straddle the boundary (r_lo → {lo}, r_hi → {hi})")]
    BracketInvalid { lo: String, hi: String },

    #[error("fewer than two local maxima of |Y_m| at radius {radius}")]
    InsufficientOscillation { radius: f64 },
}

impl Error {
    /// Integration failures that signal a singularity of the integrated
    /// equation rather than a usage mistake.
    pub fn is_escape_like(&self) -> bool {
        matches!(
            self,
            Error::StepSizeUnderflow { .. } | Error::NonFinite { .. } | Error::TooManySteps { .. }
        )
    }
}
