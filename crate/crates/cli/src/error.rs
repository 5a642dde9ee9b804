use fastsvt_core::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad files, flags or manifests.
    #[error("{0}")]
    Input(String),
    /// A numerical failure inside the solver.
    #[error("solver failed: {0}")]
    Solver(CoreError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: CoreError,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Solver(_) | CliError::Output { .. } => EXIT_FAILURE,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::SvdNoConvergence { .. } | CoreError::NonFinite(_) => CliError::Solver(e),
            other => CliError::Input(other.to_string()),
        }
    }
}
