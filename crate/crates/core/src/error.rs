use thiserror::Error;

use crate::levy::LevyMode;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degenerate interval: {0}")]
    DegenerateInterval(String),

    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),

    #[error("split_seed needs at least one child")]
    EmptySplit,

    #[error("triple populated for {found:?} but {expected:?} was required")]
    ModeMismatch { expected: LevyMode, found: LevyMode },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite state at t = {0}")]
    NonFinite(f64),

    #[error("step size underflow at t = {t}: h_min = {h_min} still rejected")]
    StepUnderflow { t: f64, h_min: f64 },

    #[error("drift parameter b - sigma^2/(4a) = {0} is negative")]
    NegativeShiftedMean(f64),

    #[error("slope fit needs at least 3 usable step sizes, got {0}")]
    TooFewStepSizes(usize),
}
