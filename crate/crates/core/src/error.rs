use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vehicle parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("invalid boundary conditions: {0}")]
    InvalidBoundary(String),

    #[error("speed limit {v_max} m/s is below the boundary speeds ({v_init}, {v_final})")]
    SpeedLimitInfeasible {
        v_init: f64,
        v_final: f64,
        v_max: f64,
    },

    #[error("no feasible horizon up to {t_cap} s")]
    InfeasibleHorizon { t_cap: f64 },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("lead history: {0}")]
    LeadHistory(String),

    #[error("ego at {x} m is past the end of link `{link}` ({length} m)")]
    LinkTransition { link: String, x: f64, length: f64 },

    #[error("invalid route: {0}")]
    InvalidRoute(String),

    #[error("coordinate ({lat}, {lon}) is outside the projection zone")]
    OutOfZone { lat: f64, lon: f64 },

    #[error("point is {distance:.1} m from the route (limit {limit} m)")]
    OffRoute { distance: f64, limit: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid segment {index}: {reason}")]
    DegenerateSegment { index: usize, reason: String },

    #[error("EDS reference energy must be positive, got {0}")]
    NonPositiveReference(f64),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
