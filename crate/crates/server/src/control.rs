//! Loopback HTTP control API. It only reads worker snapshots and sends
//! commands through the worker's between-frames queue.

use std::convert::Infallible;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{Html, IntoResponse, Redirect, Response};
use axum::routing::get;
use axum::{Json, Router};
use fidtrack_core::engine::config::ControlConfig;
use fidtrack_core::engine::{EngineError, TrackerConfig};
use futures_util::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

use crate::worker::{Command, Shared};
use crate::ServerError;

pub const CONTROL_PORT_ENV: &str = "FIDTRACK_CONTROL_PORT";

/// Minimum spacing of server-push messages (at most 10 per second).
pub const STREAM_INTERVAL: Duration = Duration::from_millis(100);

const PLACEHOLDER_UI: &str = "<!doctype html>\n<title>fidtrack</title>\n<p>No UI bundle configured. Set <code>control.ui_dir</code> to serve one here.</p>\n";

#[derive(Clone)]
pub struct ControlState {
    commands: Arc<Mutex<mpsc::Sender<Command>>>,
    shared: Arc<Shared>,
}

impl ControlState {
    pub fn new(commands: mpsc::Sender<Command>, shared: Arc<Shared>) -> Self {
        Self {
            commands: Arc::new(Mutex::new(commands)),
            shared,
        }
    }

    /// Queues a command and waits for the worker to apply it.
    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Option<T> {
        let (tx, rx) = oneshot::channel();
        let sent = self
            .commands
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .send(make(tx))
            .is_ok();
        if !sent {
            return None;
        }
        rx.await.ok()
    }
}

/// Port from `FIDTRACK_CONTROL_PORT` when set, otherwise from the config.
pub fn control_port(cfg: &ControlConfig) -> Result<u16, ServerError> {
    match std::env::var(CONTROL_PORT_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| ServerError::BadPort { var: CONTROL_PORT_ENV, value: v }),
        Err(_) => Ok(cfg.port),
    }
}

fn errors(status: StatusCode, list: Vec<String>) -> Response {
    (status, Json(json!({ "errors": list }))).into_response()
}

fn worker_gone() -> Response {
    errors(StatusCode::SERVICE_UNAVAILABLE, vec!["pipeline worker is not running".into()])
}

fn config_response(cfg: &TrackerConfig) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], cfg.to_json()).into_response()
}

async fn get_state(State(st): State<ControlState>) -> Response {
    Json(st.shared.state()).into_response()
}

async fn get_config(State(st): State<ControlState>) -> Response {
    config_response(&st.shared.state().config)
}

async fn put_config(State(st): State<ControlState>, body: String) -> Response {
    let cfg: TrackerConfig = match serde_json::from_str(&body) {
        Ok(c) => c,
        Err(e) => return errors(StatusCode::BAD_REQUEST, vec![e.to_string()]),
    };
    let violations = cfg.violations();
    if !violations.is_empty() {
        return errors(StatusCode::BAD_REQUEST, violations);
    }
    match st.call(|tx| Command::ApplyConfig(cfg, tx)).await {
        Some(Ok(applied)) => config_response(&applied),
        Some(Err(EngineError::Config(v))) => errors(StatusCode::BAD_REQUEST, v),
        Some(Err(e)) => errors(StatusCode::BAD_REQUEST, vec![e.to_string()]),
        None => worker_gone(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptureRequest {
    frames: u32,
}

async fn capture(State(st): State<ControlState>, Json(req): Json<CaptureRequest>) -> Response {
    if !st.shared.state().config.background.enabled {
        return errors(StatusCode::CONFLICT, vec!["background.enabled: capture requires background subtraction".into()]);
    }
    match st.call(|tx| Command::CaptureBackground(req.frames, tx)).await {
        Some(Ok(())) => (StatusCode::ACCEPTED, Json(json!({ "frames": req.frames }))).into_response(),
        Some(Err(EngineError::BackgroundDisabled)) => {
            errors(StatusCode::CONFLICT, vec!["background.enabled: capture requires background subtraction".into()])
        }
        Some(Err(EngineError::Config(v))) => errors(StatusCode::BAD_REQUEST, v),
        Some(Err(e)) => errors(StatusCode::BAD_REQUEST, vec![e.to_string()]),
        None => worker_gone(),
    }
}

fn preview_events(st: ControlState) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = st.shared.previews();
    futures_util::stream::unfold((rx, true), |(mut rx, first)| async move {
        if !first {
            tokio::time::sleep(STREAM_INTERVAL).await;
        }
        loop {
            let latest = rx.borrow_and_update().clone();
            if let Some(msg) = latest {
                let event = Event::default()
                    .event("frame")
                    .json_data(&*msg)
                    .unwrap_or_else(|_| Event::default().comment("unencodable preview"));
                return Some((Ok(event), (rx, false)));
            }
            rx.changed().await.ok()?;
        }
    })
}

async fn stream(State(st): State<ControlState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    Sse::new(preview_events(st)).keep_alive(KeepAlive::default())
}

async fn placeholder_ui() -> Html<&'static str> {
    Html(PLACEHOLDER_UI)
}

/// All control routes. Static UI assets come from `ui_dir` under `/ui/`.
pub fn router(state: ControlState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/v1/state", get(get_state))
        .route("/api/v1/config", get(get_config).put(put_config))
        .route("/api/v1/background/capture", axum::routing::post(capture))
        .route("/api/v1/stream", get(stream))
        .route("/ui", get(|| async { Redirect::permanent("/ui/") }))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.nest_service("/ui/", ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/ui/", get(placeholder_ui)),
    }
}

/// Binds the loopback control port and returns the bound address with the
/// serving future.
pub async fn serve_control(
    port: u16,
    router: Router,
) -> Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>), ServerError> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServerError::Bind { endpoint: format!("tcp:{addr}"), source: e })?;
    let bound = listener.local_addr()?;
    Ok((bound, async move { axum::serve(listener, router).await }))
}
