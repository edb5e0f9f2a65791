//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size N = {0} outside supported range 8..=1024")]
    GridSize(usize),

    #[error("evaluation point x = {0} outside [-1, 1]")]
    OutOfDomain(f64),

    #[error("invalid profile: {what} (magnitude {magnitude:.3e})")]
    InvalidProfile { what: String, magnitude: f64 },

    #[error("precision loss: {0}")]
    PrecisionLoss(String),

    #[error("invalid step policy: {0}")]
    InvalidPolicy(String),

    #[error("CFL violation at t = {t:.6}: dt = {dt:.3e} exceeds bound {bound:.3e}")]
    CflViolation { t: f64, dt: f64, bound: f64 },

    #[error("positivity loss at t = {t:.6}: min interior phi = {min_phi:.3e} at x = {x:.6}")]
    PositivityLoss { t: f64, min_phi: f64, x: f64 },

    #[error("non-finite value at t = {t:.6} in {field}")]
    NonFinite { t: f64, field: String },

    #[error("time stencil needs {needed} consecutive frames, got {got}")]
    StencilTooShort { needed: usize, got: usize },

    #[error("window offset {offset} is not a multiple of the trace cadence {cadence}")]
    BadOffset { offset: f64, cadence: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace unsuitable for this check: {0}")]
    BadTrace(String),
}
