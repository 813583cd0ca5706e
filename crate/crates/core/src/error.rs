use thiserror::Error;

/// Errors produced by the simulator, estimators and controller.
#[derive(Debug, Error)]
pub enum AlrError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("shading image has no valid pixels")]
    EmptyShading,

    #[error("empty isointensity circle: iso value {iso} exceeds peak intensity {peak}")]
    EmptySic { iso: f64, peak: f64 },

    #[error("unknown scene preset `{0}`")]
    UnknownPreset(String),

    #[error("session is not running (status {0})")]
    NotRunning(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image encoding error: {0}")]
    Image(#[from] image::ImageError),

    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T, E = AlrError> = std::result::Result<T, E>;
