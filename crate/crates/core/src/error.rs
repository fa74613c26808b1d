use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("sites {a} and {b} are {distance:.6} apart, below m_min = {m_min}")]
    NonDegeneracy { a: usize, b: usize, distance: f64, m_min: f64 },
    #[error("cutoff {cutoff} exceeds half the cell width {half_width}; enable multi-image sums")]
    CutoffTooLarge { cutoff: f64, half_width: f64 },
    #[error("model: {0}")]
    Model(String),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("parameter file line {line}: {message}")]
    Params { line: usize, message: String },
    #[error("overlap matrix is not positive definite")]
    OverlapNotPositive,
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("no spectral gap at mu = {mu} (distance {distance:.3e})")]
    NoGap { mu: f64, distance: f64 },
    #[error("point {0} lies on an excluded branch ray of the grand potential")]
    BranchCut(String),
    #[error("contour: {0}")]
    Contour(String),
    #[error("quadrature did not converge: change {change:.3e} > tol {tol:.3e} at {nodes} nodes")]
    Quadrature { change: f64, tol: f64, nodes: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("operation not supported: {0}")]
    Unsupported(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("defect: {0}")]
    Defect(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
