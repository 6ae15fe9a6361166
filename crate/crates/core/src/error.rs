use std::path::PathBuf;

/// Errors produced anywhere in the data-driven pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("{source_name}: row {row}, column {column}: {message}")]
    Parse {
        source_name: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{source_name}: empty dataset")]
    EmptyDataset { source_name: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("cannot load model: {0}")]
    ModelLoad(String),

    #[error("insufficient kernel coverage at ({x}, {y}): {reason}")]
    Coverage { x: f64, y: f64, reason: String },

    #[error("local solver failure: {0}")]
    LocalSolver(String),

    #[error("singular linear system (pivot {pivot})")]
    Singular { pivot: usize },

    #[error(
        "Newton iteration did not converge in {iterations} iterations (residual {residual:e})"
    )]
    NewtonFailure { iterations: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical solvers, as opposed to bad input or configuration.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::LocalSolver(_)
                | Error::Singular { .. }
                | Error::NewtonFailure { .. }
                | Error::Coverage { .. }
        )
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
