use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("Lotka-Sharpe residual has no sign change on [0, {upper}]")]
    NoRoot { upper: f64 },

    #[error("shape integral vanishes; cannot calibrate birth modulus")]
    DegenerateShape,

    #[error("trajectory is not positive: {0}")]
    NonPositive(String),

    #[error("initial condition rejected: {0}")]
    InvalidIc(String),

    #[error("history does not cover [{from}, {to}] (buffer starts at {start})")]
    HistoryGap { from: f64, to: f64, start: f64 },

    #[error("logarithm of non-positive argument {arg} at t = {t}")]
    LogDomain { t: f64, arg: f64 },

    #[error("measured output {y} is not positive at t = {t}")]
    NonPositiveOutput { t: f64, y: f64 },

    #[error("found {found} characteristic roots, {requested} requested")]
    RootSearchExhausted { found: usize, requested: usize },

    #[error("trial functions are linearly dependent (Gram condition {condition:e})")]
    DependentBasis { condition: f64 },

    #[error("approximate profile became negative ({min:e}) at t = {t}")]
    PositivityViolation { t: f64, min: f64 },

    #[error("modal weights overflowed at t = {t}")]
    Instability { t: f64 },

    #[error("no lambda satisfies the kernel condition (best value {value})")]
    B3Fail { value: f64 },

    #[error("no (p1, p2) pair satisfies the observer quadratic-form conditions")]
    NoFeasiblePair,

    #[error("reference trajectory violates the logarithmic rate band (mu1 = {mu1})")]
    InvalidTrajectory { mu1: f64 },
}
