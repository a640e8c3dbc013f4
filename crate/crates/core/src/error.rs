use thiserror::Error;

pub type Result<T> = std::result::Result<T, ConeError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("requested {requested} modes but the discretization resolves at most {available}")]
    UnderResolved { requested: usize, available: usize },

    #[error("mode index {index} out of range (have {available})")]
    ModeOutOfRange { index: usize, available: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("spectrum does not resolve the window ({lo}, {hi}): {detail}")]
    WindowNotCovered { lo: f64, hi: f64, detail: String },

    #[error("weight on pole: {location} coincides with a pole of the inverse symbol")]
    WeightOnPole { location: f64 },

    #[error("preset {preset} is incompatible with the weight window: {reason}")]
    IncompatiblePreset { preset: String, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("positivity lost at node ({node}, {point}): value {value:e}")]
    PositivityLost {
        node: usize,
        point: usize,
        value: f64,
    },

    #[error("instability detected at t = {t}: |u| = {magnitude:e}")]
    Instability { t: f64, magnitude: f64 },

    #[error("no signal: mode coefficient {magnitude:e} below threshold")]
    NoSignal { magnitude: f64 },

    #[error("negative eigenvalue {0:e} in -L; boundary assembly is inconsistent")]
    NegativeEigenvalue(f64),
}
