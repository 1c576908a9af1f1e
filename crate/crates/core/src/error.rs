use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A line with a zero direction vector or a non-positive lane spacing.
    InvalidGeometry(&'static str),
    InvalidValue {
        what: &'static str,
        value: f64,
    },
    /// A dynamics step failed at control `index`.
    Rollout {
        index: usize,
        source: Box<Error>,
    },
    NotEnoughHistory {
        have: usize,
        need: usize,
    },
    /// No prediction available for adjacent car `car` issued at `issue_step`.
    TraceGap {
        car: usize,
        issue_step: usize,
    },
    NonFinite {
        feature: Option<&'static str>,
        step: Option<usize>,
        context: String,
    },
    /// `-H` stayed indefinite after every regularization attempt.
    NotPositiveDefinite {
        lambdas: Vec<f64>,
    },
    Config(String),
    TooShort {
        len: usize,
        need: usize,
    },
    InsufficientData {
        lane: i64,
        points: usize,
    },
    Divergence {
        iteration: usize,
        trace: Vec<f64>,
    },
    Shape(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGeometry(what) => write!(f, "invalid geometry: {what}"),
            Error::InvalidValue { what, value } => write!(f, "invalid value for {what}: {value}"),
            Error::Rollout { index, source } => write!(f, "rollout failed at step {index}: {source}"),
            Error::NotEnoughHistory { have, need } => {
                write!(f, "not enough history: have {have} samples, need {need}")
            }
            Error::TraceGap { car, issue_step } => {
                write!(f, "prediction trace gap for car {car} at issue step {issue_step}")
            }
            Error::NonFinite { feature, step, context } => {
                write!(f, "non-finite value in {context}")?;
                if let Some(name) = feature {
                    write!(f, " (feature {name})")?;
                }
                if let Some(k) = step {
                    write!(f, " (step {k})")?;
                }
                Ok(())
            }
            Error::NotPositiveDefinite { lambdas } => {
                write!(f, "negated Hessian not positive definite after regularization {lambdas:?}")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::TooShort { len, need } => write!(f, "track too short: {len} samples, need {need}"),
            Error::InsufficientData { lane, points } => {
                write!(f, "insufficient data to fit lane {lane}: {points} points")
            }
            Error::Divergence { iteration, .. } => {
                write!(f, "likelihood diverged at iteration {iteration}")
            }
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidValue { what, value })
    }
}
