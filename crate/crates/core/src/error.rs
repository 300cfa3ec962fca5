use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Lévy measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("degenerate diffusion at sample {sample}: smallest eigenvalue of σσᵀ is {lambda_min}")]
    DegenerateDiffusion { sample: usize, lambda_min: f64 },
    #[error("ellipticity failure at node {node}: diffusion coefficient {value} is not positive")]
    Ellipticity { node: usize, value: f64 },
    #[error("non-finite jump shift at node {node}, atom {atom}")]
    NonFiniteShift { node: usize, atom: usize },
    #[error("non-finite coefficient: {0}")]
    NonFiniteCoefficient(String),
    #[error("linear solve did not converge after {iterations} iterations (residual {residual})")]
    LinearSolve { iterations: usize, residual: f64 },
    #[error("solution blew up at time level {level} (t = {time})")]
    BlowUp { level: usize, time: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidSolverConfig(String),
    #[error("invalid simulation input: {0}")]
    InvalidSimulation(String),
    #[error("config error{}: {field}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("unknown problem `{name}`; available: {}", available.join(", "))]
    UnknownProblem {
        name: String,
        available: Vec<String>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            field: field.into(),
            message: message.into(),
        }
    }
}
