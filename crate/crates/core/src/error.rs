use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("inverse branch did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("window of length {len} exceeds the brute-force guard of {max}")]
    WindowTooLarge { len: u64, max: u64 },

    #[error("segment {index} starts at {start} but the previous segment ends at {previous_end}")]
    NonContiguous {
        index: usize,
        start: u64,
        previous_end: u64,
    },

    #[error("slow variable left the admissible range: |x| = {value:e} at step {step}")]
    Overflow { step: u64, value: f64 },

    #[error("a scaling fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("value {value} at n = {n} is not positive and cannot be log-transformed")]
    NonPositive { n: f64, value: f64 },

    #[error("time step {dt} is too large for horizon {t_end} (need dt <= 1e-3 * t_end)")]
    StepSize { dt: f64, t_end: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
