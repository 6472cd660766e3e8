use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: lower bound {lower} must be smaller than upper bound {upper}")]
    InvalidRange { lower: f64, upper: f64 },

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("degenerate rectangle with corners {lower:?} and {upper:?}")]
    DegenerateRectangle { lower: [f64; 2], upper: [f64; 2] },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh dump parse error on line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("diffusion tensor is not uniformly elliptic: {0}")]
    SingularCoefficient(String),

    #[error("shifted bilinear form is not coercive: smallest eigenvalue of the symmetric part is {min_eigenvalue:e}")]
    NotCoercive { min_eigenvalue: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("Krylov approximation did not converge within {substeps} substeps (t = {t})")]
    NoConvergence { substeps: usize, t: f64 },

    #[error("matrix exponential overflow: {0}")]
    Overflow(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite state detected at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: order fit needs at least 3 rows, got {rows}")]
    InsufficientData { rows: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{stage}: {source}")]
    Context {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn context(self, stage: impl Into<String>) -> Self {
        Error::Context {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
