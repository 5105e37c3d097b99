use crate::Vec8;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rotation axis is not unit length (norm {0})")]
    NonUnitAxis(f64),

    #[error("dual quaternion is not unit (constraint residual {0:.3e})")]
    NotUnit(f64),

    #[error("line {line}: dual quaternion is not unit (constraint residual {residual:.3e})")]
    NotUnitAt { line: usize, residual: f64 },

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("no motion pairs accumulated")]
    EmptyData,

    /// The local solver ran out of iterations. The best iterate found so far
    /// is carried along so callers can still inspect or use it.
    #[error("local solver did not converge within {iterations} iterations (kkt residual {kkt_residual:.3e})")]
    MaxIterExceeded {
        iterations: usize,
        kkt_residual: f64,
        best: Vec8,
    },

    #[error("initial point cannot be projected onto the constraint manifold")]
    DegenerateInit,

    #[error("dual problem infeasible: {0}")]
    Infeasible(String),

    /// The minimizer is not unique. `basis` spans the feasible directions
    /// along which the cost stays at its optimum (the unobservable part);
    /// `candidate` is one of the minimizers.
    #[error("solution is not unique: null space of dimension {null_dim}, {} free direction(s)", basis.len())]
    NonUniqueSolution {
        null_dim: usize,
        basis: Vec<Vec8>,
        candidate: Vec8,
    },

    #[error("dual certificate has no null space (smallest eigenvalue {min_eig:.3e})")]
    NoNullSpace { min_eig: f64 },

    #[error("candidate violates the constraints (max residual {0:.3e})")]
    InfeasiblePoint(f64),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("timestamps must be strictly increasing ({prev} then {next})")]
    NonMonotonicTime { prev: f64, next: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("rotation at line {line} is not orthogonal (deviation {deviation:.3e})")]
    NonOrthogonalRotation { line: usize, deviation: f64 },

    #[error("motion streams do not overlap in time")]
    NoOverlap,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
