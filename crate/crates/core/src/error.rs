use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("derivative {value} at t = {t} is not positive")]
    NonPositiveDerivative { t: f64, value: f64 },

    #[error("singular argument: {0}")]
    Singular(String),

    #[error("exponent {exponent} exceeds the overflow guard")]
    Overflow { exponent: f64 },

    #[error("map is not periodic: {0}")]
    Periodicity(String),

    #[error("path is not pinned at t0 = {t0}: phi(t0) = {value}")]
    PinMismatch { t0: f64, value: f64 },

    #[error("inversion failed: {0}")]
    Inversion(String),

    #[error("non-finite sample {value} in chunk {chunk} at index {index}")]
    NonFinite { chunk: usize, index: usize, value: f64 },

    #[error("positivity violated: {0}")]
    Positivity(String),
}

/// Largest exponent accepted before `exp` is refused.
pub const EXP_GUARD: f64 = 700.0;

pub(crate) fn guarded_exp(exponent: f64) -> Result<f64> {
    if exponent > EXP_GUARD || exponent.is_nan() {
        Err(Error::Overflow { exponent })
    } else {
        Ok(exponent.exp())
    }
}
