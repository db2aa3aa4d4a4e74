use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Some `|q_n|` reached the defocusing bound.
    #[error("inadmissible field: |q_{site}| = {modulus} violates sup|q| < 1")]
    Inadmissible { site: i64, modulus: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("linear solver failed: {message} (condition estimate {condition:e})")]
    Solver { message: String, condition: f64 },

    #[error("ray xi = {xi} is outside the region handled here ({expected})")]
    WrongRegion { xi: f64, expected: &'static str },

    #[error("inconsistent scattering data: {0}")]
    Inconsistent(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sample keys do not match; missing: {}", missing.join(", "))]
    KeyMismatch { missing: Vec<String> },

    #[error("need at least {required} usable samples, got {usable}")]
    InsufficientSamples { usable: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
