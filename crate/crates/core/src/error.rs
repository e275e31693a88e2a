use crate::c64;

/// Errors raised by the spectral idempotent toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("column {k} of {which} is the zero vector")]
    ZeroColumn { which: &'static str, k: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("evaluation point {z} collides with lambda[{index}] (distance {distance:e})")]
    Collision { z: c64, index: usize, distance: f64 },

    #[error("abscissa {xi} lies on the real shadow of lambda[{index}] (distance {distance:e})")]
    OnSpectrumShadow {
        xi: f64,
        index: usize,
        distance: f64,
    },

    #[error("abscissa {xi} outside the admissible interval ({lo}, {hi})")]
    OutsideAdmissibleRange { xi: f64, lo: f64, hi: f64 },

    #[error("core matrix at z = {z} is near-singular (condition {condition:e})")]
    NearSingularCore { z: c64, condition: f64 },

    #[error("quadrature did not converge: residual {residual:e} at the refinement limit")]
    QuadratureNonConvergence {
        estimate: Box<Vec<c64>>,
        residual: f64,
    },

    #[error("point {z} is within {distance:e} of the contour")]
    TooCloseToContour { z: c64, distance: f64 },

    #[error("eigensystem is near-defective (minimum eigenvalue gap {gap:e})")]
    NearDefective { gap: f64 },

    #[error("eigenvalue {mu} is within {distance:e} of the region boundary")]
    BoundaryCollision { mu: c64, distance: f64 },

    #[error("oracle routes disagree: eigenprojector sum vs dense contour gap {gap:e}")]
    OracleMismatch { gap: f64 },

    #[error("operator is a scalar multiple of the identity")]
    ScalarOperator,

    #[error("dimension {n} exceeds the dense cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("abscissa {xi} rejected from the decomposability set: {reasons:?}")]
    NotInDecomposabilitySet { xi: f64, reasons: Vec<String> },

    #[error("verification failed: {name} = {value:e} exceeds {tolerance:e}")]
    Verification {
        name: String,
        value: f64,
        tolerance: f64,
    },

    #[error("idempotents built at different abscissae or sides: {0}")]
    MismatchedPair(String),

    #[error("local summability fails at abscissa {xi}: {reasons:?}")]
    LocalConditionFailed { xi: f64, reasons: Vec<String> },

    #[error("no certified tail bound available and certification was demanded")]
    Uncertified,

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
