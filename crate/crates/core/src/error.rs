use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite state encountered at step {step}")]
    NonFinite { step: u64 },

    #[error("harmonic {k:?} is listed twice")]
    DuplicateHarmonic { k: Vec<i64> },

    #[error("small divisor {divisor:e} for harmonic {k:?} (floor {floor:e})")]
    SmallDivisor { k: Vec<i64>, divisor: f64, floor: f64 },

    #[error("resonance vector {k:?} is light-like (A = 0)")]
    LightLikeResonance { k: Vec<i64> },

    #[error("resonance geometry: {0}")]
    Geometry(String),

    #[error("degenerate resonance: averaged potential is constant in the resonant phase")]
    DegenerateResonance,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("no admissible constants found; binding inequality: {binding}")]
    SearchExhausted { binding: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
