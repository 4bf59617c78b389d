use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coincident points: segment length {0:e} mm below tolerance")]
    CoincidentPoints(f64),
    #[error("degenerate twist: endpoint lies on the base x-axis (y^2 + z^2 = {0:e})")]
    DegenerateTwist(f64),
    #[error("section marker {index} out of range for {len} backbone points")]
    BadMarkers { index: usize, len: usize },
    #[error("feature is near a singular configuration (bending angle {0} deg)")]
    NearSingularFeature(f64),
    #[error("invalid backbone: {0}")]
    InvalidBackbone(String),
    #[error("actuator {index} value {value} outside [{min}, {max}]")]
    OutOfRange { index: usize, value: f64, min: f64, max: f64 },
    #[error("actuator velocity {value} exceeds limit {limit}")]
    VelocityLimit { value: f64, limit: f64 },
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("degenerate actuator range: {0}")]
    BadRange(String),
    #[error("no basis layout for k = {k} neurons in n = {n} dimensions (need k = g^n or k = 2n + 1)")]
    UnsupportedNeuronCount { k: usize, n: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("oracle fit is ill-conditioned (condition number {0:e})")]
    IllConditionedFit(f64),
    #[error("empty trace")]
    EmptyTrace,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown plant preset `{0}`")]
    UnknownPreset(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
