use thiserror::Error;

/// Errors raised by the simulator and controller library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),

    #[error("waypoint {index} is infeasible: {reason}")]
    InfeasibleWaypoint { index: usize, reason: String },

    #[error("malformed behaviour tree: {0}")]
    MalformedTree(String),

    #[error("unknown topic `{0}`")]
    UnknownTopic(String),

    #[error("topic `{topic}` is not visible from namespace `{namespace}`")]
    TopicAccess { topic: String, namespace: String },

    #[error("topic `{topic}` expects {expected} payloads, got {got}")]
    PayloadType { topic: String, expected: String, got: &'static str },

    #[error("measurement rejected as outlier (squared Mahalanobis distance {0:.2})")]
    OutlierRejected(f64),

    #[error("could not place {what} without overlap after {attempts} attempts")]
    SpawnFailed { what: String, attempts: usize },

    #[error("no robot with id {0}")]
    UnknownRobot(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
