use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("weight matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("weight ({i}, {j}) is not finite")]
    NonFiniteWeight { i: usize, j: usize },

    #[error("weight matrix is asymmetric at ({i}, {j}): {a_ij} != {a_ji}")]
    Asymmetric {
        i: usize,
        j: usize,
        a_ij: f64,
        a_ji: f64,
    },

    #[error("negative weight {weight} at ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("nonzero diagonal weight {weight} at node {i}")]
    NonzeroDiagonal { i: usize, weight: f64 },

    #[error("edge ({i}, {j}) references a node outside 1..={n}")]
    EdgeOutOfRange { i: usize, j: usize, n: usize },

    #[error("eigensolver did not converge after {iterations} iterations")]
    EigenNonConvergence { iterations: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid function parameter: {0}")]
    InvalidFunction(String),

    #[error("oracle search box too small: minimizer on boundary at coordinate {coordinate}")]
    OracleBoxTooSmall { coordinate: usize },

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("scale factor K={k} must exceed 1/c = {bound}")]
    ScaleTooSmall { k: f64, bound: f64 },

    #[error("parameter bound violated: {0}")]
    ParameterBound(String),

    #[error("graph has no edges (lambda_max = 0)")]
    EdgelessGraph,

    #[error("non-finite vector field at agent {agent} (t = {t})")]
    NonFiniteField { agent: usize, t: f64 },

    #[error("state norm exceeded {limit:e} at t = {t}")]
    Diverged { t: f64, limit: f64 },

    #[error("assumption check failed: {0}")]
    Assumptions(String),

    #[error("certificate construction failed: {0}")]
    Certificate(String),

    #[error("scenario error at {key}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Scenario {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("trajectory file error: {0}")]
    Trajectory(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
