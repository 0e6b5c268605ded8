//! Error type and exit codes.

use resonance_core::Error as CoreError;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for numerical failures (solver, tolerance, verification).
pub const EXIT_NUMERICAL: i32 = 1;
/// Exit code for bad input (files, arguments, model validation).
pub const EXIT_INPUT: i32 = 2;

/// Errors raised by the kit.
#[derive(Debug, thiserror::Error)]
pub enum KitError {
    /// Bad arguments or files.
    #[error("{0}")]
    Input(String),
    /// A computation failed or a check did not pass.
    #[error("{0}")]
    Numerical(String),
    /// Error from the numerical core.
    #[error(transparent)]
    Core(#[from] CoreError),
    /// File system error.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed JSON.
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    /// CSV writer error.
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// True for core errors caused by the input rather than by the numerics.
pub fn is_input_error(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::NonSymmetricDot { .. }
            | CoreError::BadSiteIndex { .. }
            | CoreError::NoLeads
            | CoreError::InvalidModel(_)
            | CoreError::BadLead(_)
            | CoreError::ZeroLambda
            | CoreError::BranchPoint(_)
            | CoreError::BandEdge(_)
            | CoreError::BandEdgeK(_)
            | CoreError::UnitCircleLambda(_)
            | CoreError::HorizonExceeded { .. }
            | CoreError::BadArgument(_)
    )
}

impl KitError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            KitError::Numerical(_) => EXIT_NUMERICAL,
            KitError::Core(e) if !is_input_error(e) => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        }
    }
}

/// Result alias.
pub type KitResult<T> = Result<T, KitError>;
