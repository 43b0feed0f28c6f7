//! Error type shared across the library.

/// Errors raised by geometry validation, projections, controllers, solvers,
/// and scenario parsing.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("degenerate element {vertices:?}: |det(S_ref)| = {det:.3e} <= threshold {threshold:.3e}")]
    DegenerateElement {
        vertices: Vec<usize>,
        det: f64,
        threshold: f64,
    },

    #[error("duplicate element with vertex set {0:?}")]
    DuplicateElement(Vec<usize>),

    #[error("invalid element {vertices:?}: {reason}")]
    InvalidElement { vertices: Vec<usize>, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("projection undefined: {0}")]
    ProjectionUndefined(String),

    #[error("frame for agent {agent} is not a rotation (orthogonality/det residual {residual:.3e})")]
    NonRotationFrame { agent: usize, residual: f64 },

    #[error("zero-length reference edge ({i}, {j})")]
    ZeroLengthEdge { i: usize, j: usize },

    #[error("degenerate ratio-of-distance triplet ({i}, {j}, {k}): denominator edge too short")]
    DegenerateTriplet { i: usize, j: usize, k: usize },

    #[error("follower block is numerically singular (condition estimate {cond:.3e})")]
    SingularInterior { cond: f64 },

    #[error("weight design infeasible: {0}")]
    Infeasible(String),

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("configuration is not an equilibrium: |gradient| = {gradient_norm:.3e}")]
    NotEquilibrium { gradient_norm: f64 },

    #[error("coefficient of variation undefined: {0}")]
    UndefinedCov(String),

    #[error("degenerate fit: reference has zero centered variance")]
    DegenerateFit,

    #[error("scenario field `{field}`: {reason}")]
    Scenario { field: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
