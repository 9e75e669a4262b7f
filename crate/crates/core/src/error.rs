use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle {triangle} (area {area:e})")]
    DegenerateElement { triangle: usize, area: f64 },

    #[error("advection failed at step {step}: triangle {triangle} degenerated")]
    AdvectionFailed { step: usize, triangle: usize },

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("field length {got} does not match {expected} vertices")]
    FieldLength { expected: usize, got: usize },

    #[error("space-time field has {got} nodes, trajectory has {expected}")]
    NodeCount { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unsupported exponent {0}")]
    UnsupportedExponent(String),

    #[error("no usable sample field (all samples have zero norm)")]
    NoUsableSample,

    #[error("material derivative needs at least two time nodes")]
    SingleNode,

    #[error("negative coefficient {value} at vertex {vertex}")]
    NegativeCoefficient { vertex: usize, value: f64 },

    #[error("coefficient {value} outside [0, 1] at node {node}, vertex {vertex}")]
    CoefficientRange { node: usize, vertex: usize, value: f64 },

    #[error("{method} did not converge: relative residual {residual:e} after {iterations} iterations")]
    LinearSolver {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{method} breakdown at iteration {iteration}")]
    Breakdown {
        method: &'static str,
        iteration: usize,
    },

    #[error("inner iteration failed at step {step} after {iterations} iterations; residual history {history:?}")]
    InnerIteration {
        step: usize,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("mollifier reached distance {achieved:e}, above requested {requested:e}")]
    MollifierBound { achieved: f64, requested: f64 },

    #[error("trajectories do not match: {0}")]
    TrajectoryMismatch(String),

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("shift {0} is not a positive multiple of the time step")]
    ShiftNotMultiple(f64),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
