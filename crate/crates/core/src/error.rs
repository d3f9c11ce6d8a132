use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite {what} at t = {t}, x = {x:?}, a = {a:?}")]
    NonFinite { what: &'static str, t: f64, x: Vec<f64>, a: Vec<f64> },
    #[error("invalid initial distribution: {0}")]
    InitialDistribution(String),
    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),
    #[error("model `{model}`: {message}")]
    Parameter { model: String, message: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("time step {dt} exceeds the stability limit {max_dt} (largest exit rate {max_rate})")]
    Stability { dt: f64, max_dt: f64, max_rate: f64 },
    #[error("covariance at state {state} is incompatible with the positive stencil: {reason}")]
    Stencil { state: usize, reason: String },
    #[error("negative transition probability {value} in slab {slab}, action {action}, state {state}")]
    NegativeProbability { slab: usize, action: usize, state: usize, value: f64 },
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("numerical breakdown after {iterations} iterations: {reason}")]
    Breakdown { iterations: usize, reason: String, log: Vec<String> },
    #[error("iteration limit {limit} reached")]
    IterationLimit { limit: usize, log: Vec<String> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("inconsistent occupation measure: {0}")]
    Inconsistent(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Errors from the solve and certification pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("linear program unexpectedly {0}")]
    Status(String),
    #[error("invalid option: {0}")]
    Options(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("csv error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("io error in {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Format { path: String, line: usize, message: String },
}
