use thiserror::Error;

/// Errors shared across the numerical modules.
#[derive(Debug, Error)]
pub enum OulabError {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("explicit eigenvalue list is not non-increasing at index {index}: {prev} < {next}")]
    UnsortedSpectrum { index: usize, prev: f64, next: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("empty sample batch requested")]
    EmptyBatch,

    #[error("empty time grid")]
    EmptyTimeGrid,

    #[error("degenerate projection dimension 0")]
    DegenerateProjection,

    #[error("sigma underflow in mode {mode} (eps = {eps}, lambda = {lambda})")]
    SingularMode { mode: usize, eps: f64, lambda: f64 },

    #[error("divergent integral: 1 + 2*eps*beta <= 0 for eigenvalue beta = {beta} at eps = {eps}")]
    DivergentIntegral { beta: f64, eps: f64 },

    #[error("moment order {0} refused (supported range is 1..=12)")]
    MomentOrder(usize),

    #[error("integrability failure in {0}")]
    Integrability(String),

    #[error("test function is not in the terminal-zero class: {0}")]
    TestClass(String),

    #[error("ODE step size collapsed below {min_step} at s = {s}")]
    Stiffness { s: f64, min_step: f64 },

    #[error("neither sign convention satisfies the residual oracle (best residual {0})")]
    Convention(f64),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, OulabError>;
