//! Delivery side of the tracker: the newline-delimited pose stream over a
//! local socket, the HTTP control API, and the pipeline worker that feeds
//! both.

pub mod control;
pub mod hub;
pub mod preview;
pub mod transport;
pub mod worker;

use thiserror::Error;

pub use control::{control_port, router, serve_control, ControlState, CONTROL_PORT_ENV};
pub use hub::{Hub, DEFAULT_BACKLOG};
pub use transport::{serve_pose_stream, Endpoint, PoseServer};
pub use worker::{spawn_worker, Command, EngineState, Shared, WorkerHandle, WorkerOptions};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {endpoint}: {source}")]
    Bind {
        endpoint: String,
        source: std::io::Error,
    },
    #[error("{var}={value} is not a port number")]
    BadPort { var: &'static str, value: String },
    #[error("unix sockets are not available on this platform")]
    UnixUnsupported,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
