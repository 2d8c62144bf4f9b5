use thiserror::Error;

/// Errors raised by the solvers and model constructors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("inner maximization stopped after {iterations} iterations with gap {gap:e}")]
    NonConvergence {
        iterations: usize,
        gap: f64,
        best: Vec<f64>,
    },
    #[error("control cost is +inf on the whole simplex")]
    InfeasibleCost,
    #[error("rate field is not irreducible at state {state:?}")]
    NotIrreducible { state: Vec<f64> },
    #[error("generator has {dimension} stationary directions; it is reducible")]
    Reducible { dimension: usize },
    #[error("power iteration did not converge; last bracket [{lower}, {upper}]")]
    EigenNonConvergence { lower: f64, upper: f64 },
    #[error("discrete generator is not monotone: {0}")]
    NonMonotone(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("kernel violates {axiom}: {detail}")]
    KernelAxiom { axiom: String, detail: String },
    #[error("grid iteration diverged: {0}")]
    Divergence(String),
    #[error("no subdifferential element is tangent at {state:?} (residual {residual:e})")]
    TangentCone { state: Vec<f64>, residual: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
