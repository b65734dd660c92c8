use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("k and l must be non-negative, got ({k}, {l})")]
    NegativePair { k: i64, l: i64 },

    #[error("({k}, {l}) is not coprime (gcd = {gcd})")]
    NotCoprime { k: u32, l: u32, gcd: u32 },

    #[error("({k}, {l}) is exceptional: the pairs (1,0), (0,1) and (1,1) are excluded")]
    Exceptional { k: u32, l: u32 },

    #[error("{what} is outside its domain (value {value:e})")]
    DomainError { what: &'static str, value: f64 },

    #[error("Newton iteration did not converge after {iterations} steps (last iterate ({alpha}, {beta}), |L| = {residual:e})")]
    NoConvergence {
        iterations: usize,
        alpha: f64,
        beta: f64,
        residual: f64,
    },

    #[error("recovered Z4 = {z4:e} is negative on the requested branch")]
    WrongBranch { z4: f64 },

    #[error("start point is off the constraint surface (relative residual {residual:e}, allowed {allowed:e})")]
    OffSurface { residual: f64, allowed: f64 },

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("sample {index} has a vanishing Z coordinate; Z4/(Z1 Z2 Z3)^2 is undefined there")]
    DegenerateSample { index: usize },

    #[error("seed coordinate Z{index} = {value:e} is negative; theta/epsilon leave the admissible cone")]
    NegativeZ { index: usize, value: f64 },

    #[error("bisection bracket [{lo}, {hi}] is invalid: both ends classify as {side}")]
    BracketInvalid { lo: f64, hi: f64, side: &'static str },

    #[error("boundary run never came within 1e-2 of the expected AC point (closest {min_distance:e})")]
    NoSeparatrix { min_distance: f64 },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("gauge tr L at the first sample must be positive, got {0}")]
    NonPositiveGauge(f64),

    #[error("profile covers {decades:.2} decades of t; at least 2 are needed")]
    WindowTooShort { decades: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}
