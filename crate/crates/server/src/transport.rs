//! Socket listener for pose consumers: one writer task per connection,
//! each draining its own hub subscription.

use std::fmt;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use fidtrack_core::engine::config::{StreamConfig, Transport};
use tokio::io::{AsyncWrite, AsyncWriteExt};
use tokio::task::JoinHandle;

use crate::hub::{Hub, Subscription};
use crate::ServerError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Unix(PathBuf),
    Tcp(SocketAddr),
}

impl Endpoint {
    /// TCP endpoints always bind the loopback interface.
    pub fn from_config(cfg: &StreamConfig) -> Self {
        match cfg.transport {
            Transport::Unix => Endpoint::Unix(PathBuf::from(&cfg.path)),
            Transport::Tcp => Endpoint::Tcp(SocketAddr::from((Ipv4Addr::LOCALHOST, cfg.port))),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Unix(p) => write!(f, "unix:{}", p.display()),
            Endpoint::Tcp(a) => write!(f, "tcp:{a}"),
        }
    }
}

/// A running pose-stream listener. Dropping it stops accepting consumers
/// and removes the socket file; connected consumers keep their writers.
pub struct PoseServer {
    endpoint: Endpoint,
    accept: JoinHandle<()>,
}

impl PoseServer {
    /// The bound endpoint, with the actual port when port 0 was requested.
    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }
}

impl Drop for PoseServer {
    fn drop(&mut self) {
        self.accept.abort();
        if let Endpoint::Unix(path) = &self.endpoint {
            let _ = std::fs::remove_file(path);
        }
    }
}

async fn write_lines<S: AsyncWrite + Unpin>(mut stream: S, mut sub: Subscription) {
    while let Some(line) = sub.rx.recv().await {
        if let Err(e) = stream.write_all(line.as_bytes()).await {
            log::info!("pose consumer {} closed: {e}", sub.id);
            return;
        }
    }
}

fn attach<S: AsyncWrite + Unpin + Send + 'static>(hub: &Hub, stream: S) {
    let sub = hub.subscribe();
    let id = sub.id;
    let writer = tokio::spawn(write_lines(stream, sub));
    hub.attach_writer(id, writer.abort_handle());
    log::info!("pose consumer {id} connected");
}

/// Binds `endpoint` and starts accepting consumers on the current runtime.
/// A stale unix socket file at the path is replaced.
pub async fn serve_pose_stream(endpoint: Endpoint, hub: Arc<Hub>) -> Result<PoseServer, ServerError> {
    let bind_err = |e| ServerError::Bind { endpoint: endpoint.to_string(), source: e };
    match &endpoint {
        Endpoint::Tcp(addr) => {
            let listener = tokio::net::TcpListener::bind(addr).await.map_err(bind_err)?;
            let bound = Endpoint::Tcp(listener.local_addr()?);
            let accept = tokio::spawn(async move {
                loop {
                    match listener.accept().await {
                        Ok((stream, _)) => {
                            let _ = stream.set_nodelay(true);
                            attach(&hub, stream);
                        }
                        Err(e) => log::warn!("accept failed: {e}"),
                    }
                }
            });
            Ok(PoseServer { endpoint: bound, accept })
        }
        #[cfg(unix)]
        Endpoint::Unix(path) => {
            if std::fs::symlink_metadata(path).is_ok_and(|m| {
                use std::os::unix::fs::FileTypeExt;
                m.file_type().is_socket()
            }) {
                std::fs::remove_file(path).map_err(bind_err)?;
            }
            let listener = tokio::net::UnixListener::bind(path).map_err(bind_err)?;
            let accept = tokio::spawn(async move {
                loop {
                    match listener.accept().await {
                        Ok((stream, _)) => attach(&hub, stream),
                        Err(e) => log::warn!("accept failed: {e}"),
                    }
                }
            });
            Ok(PoseServer { endpoint: endpoint.clone(), accept })
        }
        #[cfg(not(unix))]
        Endpoint::Unix(_) => Err(ServerError::UnixUnsupported),
    }
}
