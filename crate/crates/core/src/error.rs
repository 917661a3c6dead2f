use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriveError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("plant step {dt:e} s outside (0, 10 µs]")]
    StepOutOfRange { dt: f64 },

    #[error("voltage vector index {0} out of range 1..=6")]
    VectorIndex(u8),

    #[error("shoot-through: switch code {0} turns on both devices of a leg")]
    ShootThrough(String),

    #[error("non-finite {signal} at t = {t} s")]
    NonFinite { signal: String, t: f64 },

    #[error("parameters not yet identifiable (1/J estimate {0} below threshold)")]
    NotIdentifiable(f64),
}

pub type Result<T> = std::result::Result<T, DriveError>;
