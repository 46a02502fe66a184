//! Error type shared across the solver crates.

use thiserror::Error;

/// Errors produced by grid construction, solver preconditions and config parsing.
#[derive(Debug, Error)]
pub enum WfrError {
    /// A field or operator was used with a layout that does not match its grid.
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    /// Two fields that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An operation requires equal masses and the inputs differ beyond tolerance.
    #[error("mass mismatch: |{lhs}| vs |{rhs}| (relative gap {rel_gap:.3e})")]
    MassMismatch { lhs: f64, rhs: f64, rel_gap: f64 },

    /// The Wasserstein step was handed a zero-mass density.
    #[error("zero-mass density: the transport step needs positive total mass")]
    ZeroMass,

    /// The reaction step smallness condition h * max|U| < 1 fails.
    #[error("time step too large for the reaction potential: h = {h}, max|U| = {max_u} (need h * max|U| < 1)")]
    StepTooLarge { h: f64, max_u: f64 },

    /// A scalar solve (prox or reaction Newton) failed to converge.
    #[error("scalar solver failure: {0}")]
    ScalarSolve(String),

    /// Invalid model or solver configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Snapshot or diagnostics file I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WfrError>;
