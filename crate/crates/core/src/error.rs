use thiserror::Error;

use crate::expr::{EvalError, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("time-scale segments overlap or are out of order near t = {0}")]
    OverlappingSegments(f64),
    #[error("time scale has {0} distinct points, at least 3 are required")]
    TooFewPoints(usize),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("grid function has {got} values, mesh has {expected} nodes")]
    MeshMismatch { expected: usize, got: usize },
    #[error("index range [{lo}, {hi}] invalid for a mesh with {nodes} nodes")]
    IndexOutOfRange { lo: usize, hi: usize, nodes: usize },
    #[error("exponential is not regressive: 1 + mu*g = 0 on gap {0}")]
    NotRegressive(usize),
    #[error("weight must be strictly positive, found {value} at node {node}")]
    NonPositiveWeight { node: usize, value: f64 },
    #[error("grid function does not vanish at the boundary")]
    BoundaryViolation,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("lambda = {lambda} is not above -lambda1 = {neg_lambda1}; the linear problem is not coercive")]
    NonCoercive { lambda: f64, neg_lambda1: f64 },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("line search stalled at iteration {0}")]
    LineSearchStall(usize),
    #[error("energy does not decrease along the direction (tried {0} doublings)")]
    NoDescentDirection(usize),
    #[error("mountain-pass path collapsed onto an endpoint")]
    DegeneratePath,
    #[error("growth-constant estimation failed: {0}")]
    EstimationFailed(String),
    #[error("impulse node {0} must be interior and strictly increasing")]
    BadImpulseNode(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl From<EvalError> for Error {
    fn from(e: EvalError) -> Self {
        Error::Expr(ExprError::Eval(e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
