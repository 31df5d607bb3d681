use alloc::string::String;

use crate::solve::SolveError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("singular point {index} at ({x}, {y}, {z}) is not strictly inside the cube")]
    SingularPointOutside { index: usize, x: f64, y: f64, z: f64 },
    #[error("degenerate tetrahedron {tet}: volume {volume:e}")]
    DegenerateTet { tet: usize, volume: f64 },
    #[error("mesh integrity: {0}")]
    MeshIntegrity(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("configuration: {0}")]
    Configuration(String),
    #[error("non-finite value {value} at node {node}")]
    Evaluation { node: usize, value: f64 },
    #[error("usage: {0}")]
    Usage(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}
