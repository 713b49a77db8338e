use thiserror::Error;

/// Errors raised across the solver stack.
///
/// Numerical magnitudes are carried as `f64` regardless of the scalar type the
/// failing computation ran in.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid velocity grid: {0}")]
    InvalidGrid(String),

    #[error("unknown angular quadrature rule `{0}`")]
    UnknownAngularRule(String),

    #[error("angular rule `{name}` has degree {degree}, at least 5 is required")]
    AngularOrderTooLow { name: String, degree: usize },

    #[error("invalid spatial grid: {0}")]
    InvalidSpatialGrid(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("non-positive {what} ({value:e}) at index {index}")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("distribution is not invariant under the requested velocity symmetry (defect {defect:e})")]
    NotSymmetric { defect: f64 },

    #[error("linearized operator symmetry defect {defect:e} exceeds {tolerance:e}")]
    SymmetryDefect { defect: f64, tolerance: f64 },

    #[error("right-hand side has a null-space component of norm {component:e}")]
    NotOrthogonal { component: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    CgNoConvergence { iterations: usize, residual: f64 },

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("transport coefficients at rho={rho}, T={temp} are not well posed: {reason}")]
    NotWellPosed { rho: f64, temp: f64, reason: String },

    #[error("Onsager reciprocity defect {defect:e} exceeds {tolerance:e}")]
    ReciprocityDefect { defect: f64, tolerance: f64 },

    #[error("query (rho={rho}, T={temp}) outside the coefficient table range")]
    TableRange { rho: f64, temp: f64 },

    #[error("hydrodynamic step rejected at t={time}: {reason}")]
    StepRejected { time: f64, reason: String },

    #[error("collision solve did not converge in cell {cell} (residual {residual:e} after {iterations} iterations)")]
    CollisionNoConvergence {
        cell: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("epsilon {epsilon} too large for positivity of well-prepared data (threshold {threshold:e})")]
    EpsilonTooLarge { epsilon: f64, threshold: f64 },

    #[error("kinetic step failed at t={time}: {source}")]
    KineticStep {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
