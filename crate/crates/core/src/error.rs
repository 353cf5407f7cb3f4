//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate level-set gradient at ({0:.6}, {1:.6}, {2:.6})")]
    DegenerateGradient(f64, f64, f64),

    #[error("no element is cut by the surface (surface outside the box?)")]
    EmptyCut,

    #[error("element {element}: no frame reaches |nu.grad(phi)|/|grad(phi)| >= {floor}")]
    FrameFailure { element: usize, floor: f64 },

    #[error("element {element}: root finding did not converge in {iterations} iterations")]
    RootFindFailure { element: usize, iterations: usize },

    #[error("unsupported polynomial degree {0} (supported: 1, 2)")]
    UnsupportedDegree(usize),

    #[error("point ({0:.6}, {1:.6}, {2:.6}) lies outside the element")]
    OutsideElement(f64, f64, f64),

    #[error("mass matrix is not numerically positive definite (min eigenvalue ratio {0:.3e})")]
    NotDefinite(f64),

    #[error("conjugate gradients did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("right-hand side is inconsistent with the singular system (residual stagnated at {0:.3e})")]
    InconsistentRhs(f64),

    #[error("normal-rank estimate unstable across shifts: observed ranks {0:?}")]
    RankEstimateUnstable(Vec<usize>),

    #[error("eigenvalue cluster for exact value {exact} expected {expected} values, got {found}; raw list: {raw:?}")]
    MultiplicityMismatch {
        exact: f64,
        expected: usize,
        found: usize,
        raw: Vec<f64>,
    },

    #[error("lapack routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse surface file {path}: {message}")]
    SurfaceParse { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
