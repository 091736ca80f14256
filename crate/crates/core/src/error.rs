use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("non-positive duration between waypoints at {from_ms} ms and {to_ms} ms")]
    ZeroDuration { from_ms: i64, to_ms: i64 },
    #[error("{0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the data or parameters rather than by
    /// configuration, files or formats.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::InvalidCoordinate { .. } | Error::ZeroDuration { .. } | Error::Domain(_)
        )
    }
}
