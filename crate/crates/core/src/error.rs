use thiserror::Error;

use crate::netmodel::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid snapshot: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidSnapshot(Vec<Violation>),

    #[error("no channels to allocate power over")]
    NoChannels,

    #[error("{profiles} association profiles exceed the enumeration cap of {cap}; use a sampling mode instead")]
    EnumerationCap { profiles: f64, cap: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
