use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se3Error {
    #[error("rotation angle {angle} is too close to pi for a unique logarithm")]
    AmbiguousBranch { angle: f64 },
    #[error("rotation block is not orthonormal with unit determinant")]
    InvalidRotation,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point depth {depth} is below the minimum depth")]
    NonPositiveDepth { depth: f64 },
    #[error("disparity {disparity} is below the minimum disparity")]
    DegenerateDisparity { disparity: f64 },
    #[error("invalid camera parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{side} stream is not time ordered at line {line}: {t} after {previous}")]
    NonMonotonicTime {
        side: &'static str,
        line: usize,
        t: f64,
        previous: f64,
    },
    #[error("no event near ({x}, {y})")]
    NoEventNearby { x: f64, y: f64 },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("normal matrix is singular or ill conditioned (condition estimate {condition:e})")]
    SingularNormalMatrix { condition: f64 },
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("every RANSAC sample was degenerate")]
    NoValidHypothesis,
    #[error("time step {dt} must be positive")]
    NonPositiveDt { dt: f64 },
    #[error(transparent)]
    Se3(#[from] Se3Error),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("query time {t} lies outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("trajectory has no knots")]
    Empty,
    #[error("knot times must be strictly increasing")]
    UnorderedKnots,
    #[error("need at least two evaluation times, got {0}")]
    TooFewTimes(usize),
    #[error(transparent)]
    Se3(#[from] Se3Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("pipeline failure during {stage}: {message}")]
    Failure { stage: String, message: String },
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn failure(stage: &str, message: impl ToString) -> Self {
        PipelineError::Failure {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }

    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Io { .. } => 3,
            PipelineError::Failure { .. } => 4,
        }
    }
}

impl From<EventError> for PipelineError {
    fn from(e: EventError) -> Self {
        match e {
            EventError::Io { path, source } => PipelineError::Io { path, source },
            other => PipelineError::failure("event loading", other),
        }
    }
}

impl From<TrajectoryError> for PipelineError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::Io { path, source } => PipelineError::Io { path, source },
            other => PipelineError::failure("trajectory", other),
        }
    }
}
