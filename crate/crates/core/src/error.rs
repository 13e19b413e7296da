use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("invalid search radius {0} (must be > 0)")]
    InvalidRadius(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("need more than {required} points, got {actual}")]
    TooFewPoints { required: usize, actual: usize },
    #[error("degenerate neighborhood: {0}")]
    DegenerateNeighborhood(String),
    #[error("no correspondences found within gate distance {max_dist}")]
    NoCorrespondences { max_dist: f64 },
    #[error("need at least 2 poses with shared time indices, got {0}")]
    TooFewPoses(usize),
    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),
    #[error("invalid octree resolution {0} (must be > 0)")]
    InvalidResolution(f64),
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("trajectory has no poses")]
    EmptyTrajectory,
    #[error("{}:{line}: timestamp {t} does not increase", path.display())]
    NonMonotoneTimestamps { path: PathBuf, line: usize, t: i64 },
    #[error("stage {stage} ({kind}): {source}")]
    Stage {
        stage: usize,
        kind: String,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error comes from geometrically degenerate input rather
    /// than malformed data.
    pub fn is_degenerate(&self) -> bool {
        match self {
            Error::EmptyCloud
            | Error::EmptyTrajectory
            | Error::DegenerateNeighborhood(_)
            | Error::DegenerateTrajectory(_)
            | Error::NoCorrespondences { .. }
            | Error::TooFewPoints { .. }
            | Error::TooFewPoses(_) => true,
            Error::Stage { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }

    /// Whether the error is a parameter or configuration mistake.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::InvalidParams(_)
            | Error::InvalidRadius(_)
            | Error::InvalidResolution(_)
            | Error::InvalidSpec(_)
            | Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
