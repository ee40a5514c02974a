use std::path::PathBuf;

use thiserror::Error;

use crate::types::SensorId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("marker triplet is collinear (triangle area {area:.3e} mm^2)")]
    CollinearMarkers { area: f64 },

    #[error("quaternion series too short: {len} samples, need at least 2")]
    SeriesTooShort { len: usize },

    #[error("observation vectors are parallel within {angle_deg:.3} deg")]
    DegenerateObservations { angle_deg: f64 },

    #[error("invalid reference fields: {0}")]
    InvalidReference(String),

    #[error("COP frame is {found}, expected {expected}")]
    WrongFrame { expected: &'static str, found: &'static str },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("unknown unit tag {tag:?} for column {column}")]
    Unit { column: String, tag: String },

    #[error("sync channel has no {edge} edge in {stream} stream")]
    NoTrigger { stream: &'static str, edge: &'static str },

    #[error("trigger interval mismatch: imu {imu_s:.4} s vs treadmill {treadmill_s:.4} s")]
    ClockSkew { imu_s: f64, treadmill_s: f64 },

    #[error("requested {requested_s} s of training data but recording lasts {available_s} s")]
    SpecTooLarge { requested_s: f64, available_s: f64 },

    #[error("invalid split specification: {0}")]
    InvalidSplit(String),

    #[error("sensor {0} is not present in the recording")]
    MissingSensor(SensorId),

    #[error("regularized Gram matrix is numerically singular")]
    SingularSystem,

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("gaitogram trace is empty")]
    EmptyTrace,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }
}
