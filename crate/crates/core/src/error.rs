use thiserror::Error;

/// Errors raised by the numerical modules.
///
/// Configuration problems live in [`crate::runner::config::ConfigError`];
/// everything here is either a precondition violation or a numerical abort.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("grid size {0} is not a power of two >= 16")]
    GridSize(usize),
    #[error("unsupported grid dimension {0} (expected 1 or 3)")]
    GridDimension(usize),
    #[error("grid length must be positive, got {0}")]
    GridLength(f64),
    #[error("field shape mismatch: expected {expected} points, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("derivative order {0} not supported (expected 1 or 2)")]
    DerivativeOrder(usize),
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    Axis { axis: usize, dim: usize },
    #[error("Yukawa mass must be positive, got {0}")]
    YukawaMass(f64),
    #[error("direct convolution oracle limited to {limit} points, grid has {points}")]
    OracleTooLarge { points: usize, limit: usize },
    #[error("non-positive radicand {0} in dispersion relation")]
    Radicand(f64),
    #[error("solitonic velocity is imaginary: V_s^2 = {0}")]
    ImaginaryVelocity(f64),
    #[error("phase velocity undefined: {0}")]
    PhaseVelocityUndefined(&'static str),
    #[error("invalid soliton spec: {0}")]
    InvalidSpec(String),
    #[error("domain too short: {length} < {required} (30 widths)")]
    DomainTooShort { length: f64, required: f64 },
    #[error("not normalizable along x: {0}")]
    NotNormalizable(&'static str),
    #[error("time step {h} underflows the field scale")]
    TimeStepUnderflow { h: f64 },
    #[error("stability guard violated: dt = {dt} > limit {limit}")]
    StabilityGuard { dt: f64, limit: f64 },
    #[error("numerical blow-up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },
    #[error("degenerate velocity fit: {0}")]
    DegenerateFit(String),
    #[error("mismatched trajectory spans: {0}")]
    SpanMismatch(String),
    #[error("invalid run control: {0}")]
    RunControl(String),
}

impl LabError {
    /// True for errors that indicate the integration itself broke down.
    pub fn is_numerical_abort(&self) -> bool {
        matches!(self, LabError::BlowUp { .. } | LabError::StabilityGuard { .. })
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
