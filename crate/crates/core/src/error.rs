use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {dt} outside (0, {max}]")]
    InvalidTimeStep { dt: f64, max: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("path self-intersects between samples {first} and {second}")]
    SelfIntersection { first: usize, second: usize },

    #[error("curvature {curvature} exceeds the steerable limit {max}")]
    CurvatureOutOfRange { curvature: f64, max: f64 },

    #[error("weight matrix {0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("riccati recursion failed at horizon step {step}")]
    Riccati { step: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("trajectory {trajectory}: {source}")]
    Collection {
        trajectory: String,
        #[source]
        source: Box<Error>,
    },

    #[error("controller failed at step {step}: {source}")]
    Controller {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
