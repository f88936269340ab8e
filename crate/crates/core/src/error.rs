use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate distance")]
    DegenerateDistance,
    #[error("inverted interval")]
    InvertedInterval,

    #[error("open surface: {0}")]
    OpenSurface(String),
    #[error("degenerate panel {0}")]
    DegeneratePanel(usize),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("violates separation condition: {0}")]
    SeparationCondition(String),
    #[error("cavity too large for cell")]
    CavityTooLarge,
    #[error("invalid cluster: {0}")]
    InvalidCluster(String),

    #[error("ill-conditioned capacitance system")]
    IllConditioned,

    #[error("singular interaction kernel: cavities {0} and {1} share a center")]
    SingularInteraction(usize, usize),
    #[error("source evaluation failed at {0}")]
    SourceEvaluation(String),
    #[error("evaluation point inside cavity {0}")]
    InsideCavity(usize),
    #[error("beyond simulated horizon: t = {t} > T = {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("time step too large for mesh")]
    TimeStepTooLarge,
    #[error("oracle size limit exceeded: {0}")]
    OracleTooLarge(String),

    #[error("source inside effective domain")]
    SourceInsideDomain,
    #[error("elliptic solve failed after {0} iterations")]
    EllipticSolveFailed(usize),
    #[error("incompatible discretizations: {0}")]
    IncompatibleDiscretizations(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("rate study failed at level {level}: {source}")]
    StudyLevel {
        level: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}
