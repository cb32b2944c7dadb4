//! Crate-wide error type.

use thiserror::Error;

use crate::solver::IterationRecord;

#[derive(Debug, Error)]
pub enum Error {
    #[error("the two wells must be distinct")]
    InvalidWells,
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("boundary labels: {0}")]
    Labels(String),
    #[error("mesh format error at line {line}: {msg}")]
    MeshFormat { line: usize, msg: String },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("expression error at byte {offset}: {msg}")]
    ExprParse { offset: usize, msg: String },
    #[error("config error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },
    #[error("config field `{field}`: {msg}")]
    ConfigValue { field: &'static str, msg: String },
    #[error("degenerate boundary panel (index {0})")]
    DegeneratePanel(usize),
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("point ({0}, {1}) is inside the domain or closer than one panel length to it")]
    PointNearBoundary(f64, f64),
    #[error("data expression produced a non-finite value at ({0}, {1})")]
    NonFiniteData(f64, f64),
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        log: Vec<IterationRecord>,
    },
    #[error("line search failed at iteration {iteration}; energy and gradient are inconsistent")]
    LineSearchFailure {
        iteration: usize,
        log: Vec<IterationRecord>,
    },
    #[error("adaptive level {level}: {source}")]
    Adaptive {
        level: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
