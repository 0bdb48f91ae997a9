use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure surfaced by the library. The `Display` form starts with the
/// stable upper-case error name so that callers (and the CLI) can quote it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("VALIDATION_FAILED: {0}")]
    Validation(String),

    #[error("PARSE_ERROR: line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("FORMAT_ERROR: {0}")]
    Format(String),

    #[error("DIMENSION_MISMATCH: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("HARD_CORE_UNSUPPORTED: {0}")]
    HardCoreUnsupported(&'static str),

    #[error("SPECTRUM_PROXIMITY: x = {x} lies within {margin:e} eV of min f_k = {fmin}")]
    SpectrumProximity { x: f64, fmin: f64, margin: f64 },

    #[error("NO_ROOT: {0}")]
    NoRoot(String),

    #[error("NON_CONVERGENCE: {0}")]
    NonConvergence(String),

    #[error("DIVISION_AT_B: lambda equals b(k) = {0}")]
    DivisionAtB(f64),

    #[error("UNDEFINED_AT_SINGULAR: k = (0, 0) is excluded")]
    UndefinedAtSingular,

    #[error("SINGULAR_HESSIAN: |det| = {det:e} below threshold {threshold:e}")]
    SingularHessian { det: f64, threshold: f64 },

    #[error("ZERO_VECTOR: {0}")]
    ZeroVector(&'static str),

    #[error("WINDOW_TOO_LARGE: half-width {w} exceeds N/2 = {max}")]
    WindowTooLarge { w: usize, max: usize },

    #[error("WINDOW_TOO_SMALL: {0}")]
    WindowTooSmall(String),

    #[error("GAP_CONDITION_FAILED: 4 eps (e^alpha - 1) = {lhs} >= g_min = {g_min}")]
    GapConditionFailed { lhs: f64, g_min: f64 },

    #[error("STEP_COUNT_TOO_SMALL: {0} < 4")]
    StepCountTooSmall(usize),

    #[error("ORDER_REJECTED: order {0} outside 1..=6")]
    OrderRejected(usize),

    #[error("TARGET_UNREACHABLE: {0}")]
    TargetUnreachable(String),

    #[error("IO_ERROR: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Upper-case identifier of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Validation(_) => "VALIDATION_FAILED",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Format(_) => "FORMAT_ERROR",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::HardCoreUnsupported(_) => "HARD_CORE_UNSUPPORTED",
            Error::SpectrumProximity { .. } => "SPECTRUM_PROXIMITY",
            Error::NoRoot(_) => "NO_ROOT",
            Error::NonConvergence(_) => "NON_CONVERGENCE",
            Error::DivisionAtB(_) => "DIVISION_AT_B",
            Error::UndefinedAtSingular => "UNDEFINED_AT_SINGULAR",
            Error::SingularHessian { .. } => "SINGULAR_HESSIAN",
            Error::ZeroVector(_) => "ZERO_VECTOR",
            Error::WindowTooLarge { .. } => "WINDOW_TOO_LARGE",
            Error::WindowTooSmall(_) => "WINDOW_TOO_SMALL",
            Error::GapConditionFailed { .. } => "GAP_CONDITION_FAILED",
            Error::StepCountTooSmall(_) => "STEP_COUNT_TOO_SMALL",
            Error::OrderRejected(_) => "ORDER_REJECTED",
            Error::TargetUnreachable(_) => "TARGET_UNREACHABLE",
            Error::Io(_) => "IO_ERROR",
        }
    }

    /// Process exit code: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::DimensionMismatch { .. }
            | Error::HardCoreUnsupported(_)
            | Error::UndefinedAtSingular
            | Error::ZeroVector(_)
            | Error::WindowTooLarge { .. }
            | Error::WindowTooSmall(_)
            | Error::StepCountTooSmall(_)
            | Error::OrderRejected(_)
            | Error::DivisionAtB(_)
            | Error::Io(_) => 2,
            Error::SpectrumProximity { .. }
            | Error::NoRoot(_)
            | Error::NonConvergence(_)
            | Error::SingularHessian { .. }
            | Error::GapConditionFailed { .. }
            | Error::TargetUnreachable(_) => 3,
        }
    }
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
