use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is degenerate at x = {x:?}")]
    DegenerateMetric { x: Vec<f64> },

    #[error("metric signature is not (+,-,...,-) at x = {x:?} (eigenvalues {eigenvalues:?})")]
    BadSignature { x: Vec<f64>, eigenvalues: Vec<f64> },

    #[error("vector is not unit timelike: eta(U,U) = {norm}")]
    NotUnitTimelike { norm: f64 },

    #[error("state outside the admissible set: eta(y,y) = {norm}")]
    OutsideAdmissible { norm: f64 },

    #[error("vector is not on the unit hyperboloid: eta(y,y) = {norm}")]
    NotOnHyperboloid { norm: f64 },

    #[error("no future-directed point on the unit hyperboloid over the given spatial components")]
    NoHyperboloidRoot,

    #[error("time component must be positive, got y0 = {0}")]
    NonPositiveTime(f64),

    #[error("distribution has empty support (total weight {0})")]
    EmptySupport(f64),

    #[error("step size underflow at s = {s} (h = {h})")]
    StepSizeUnderflow { s: f64, h: f64 },

    #[error("too many integration steps ({0})")]
    TooManySteps(usize),

    #[error("trajectory approached the light cone at s = {s}: eta(y,y) = {norm}")]
    ConeProximity { s: f64, norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
