mod common;

use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::wait_until;
use fidtrack_core::engine::TrackerConfig;
use fidtrack_server::worker::Status;
use fidtrack_server::{router, ControlState, Hub, WorkerHandle, WorkerOptions};
use futures_util::StreamExt;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

fn finished(frames: u64) -> (WorkerHandle, Router) {
    let options = WorkerOptions { keep_alive: true, ..Default::default() };
    let w = common::worker(frames, Hub::new(16), options);
    wait_until("source exhaustion", || w.shared.state().status == Status::Finished);
    let app = router(ControlState::new(w.commands.clone(), w.shared.clone()), None);
    (w, app)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn state_reports_full_rate_after_sixty_frames() {
    let (w, app) = finished(60);
    let (status, body) = call(&app, "GET", "/api/v1/state", None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["status"], "finished");
    assert_eq!(v["frames_processed"], 60);
    assert_eq!(v["objects"][0]["object_id"], 7);
    assert_eq!(v["objects"][0]["kind"], "binary");
    assert_eq!(v["objects"][0]["rate"], 1.0);
    w.shutdown().unwrap();
}

#[tokio::test]
async fn invalid_alpha_is_rejected_by_name() {
    let (w, app) = finished(1);
    let mut cfg = common::config();
    cfg.colored_points.params.alpha = 1.5;
    let (status, body) = call(&app, "PUT", "/api/v1/config", Some(cfg.to_json())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&body).unwrap();
    let errors = v["errors"].as_array().unwrap();
    assert!(errors.iter().any(|e| e.as_str().unwrap().contains("alpha")), "{body}");
    // Nothing was applied.
    let (_, current) = call(&app, "GET", "/api/v1/config", None).await;
    assert_eq!(current, common::config().to_json());

    let (status, _) = call(&app, "PUT", "/api/v1/config", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    w.shutdown().unwrap();
}

#[tokio::test]
async fn put_then_get_returns_the_same_document() {
    let (w, app) = finished(1);
    let mut cfg = common::config();
    cfg.colored_points.params.alpha = 0.5;
    let doc = cfg.to_json();
    let (status, applied) = call(&app, "PUT", "/api/v1/config", Some(doc.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(applied, doc);
    let (_, got) = call(&app, "GET", "/api/v1/config", None).await;
    assert_eq!(got, doc);
    assert_eq!(TrackerConfig::from_json(&got).unwrap(), cfg);
    w.shutdown().unwrap();
}

#[tokio::test]
async fn capture_needs_background_enabled() {
    let (w, app) = finished(1);
    let body = Some(r#"{"frames":3}"#.to_string());
    let (status, _) = call(&app, "POST", "/api/v1/background/capture", body.clone()).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let mut cfg = common::config();
    cfg.background.enabled = true;
    assert_eq!(call(&app, "PUT", "/api/v1/config", Some(cfg.to_json())).await.0, StatusCode::OK);
    let (status, _) = call(&app, "POST", "/api/v1/background/capture", body).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let (_, state) = call(&app, "GET", "/api/v1/state", None).await;
    let v: Value = serde_json::from_str(&state).unwrap();
    assert_eq!(v["background"]["capture_pending"], 3);

    let (status, _) = call(&app, "POST", "/api/v1/background/capture", Some(r#"{"frames":0}"#.into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    w.shutdown().unwrap();
}

#[tokio::test]
async fn ui_is_served_from_the_configured_directory() {
    let (w, _) = finished(1);
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>bundle</p>").unwrap();
    std::fs::write(dir.path().join("app.js"), "let x = 1;").unwrap();
    let state = ControlState::new(w.commands.clone(), w.shared.clone());
    let app = router(state.clone(), Some(dir.path().to_path_buf()));
    assert_eq!(call(&app, "GET", "/ui/", None).await, (StatusCode::OK, "<p>bundle</p>".into()));
    assert_eq!(call(&app, "GET", "/ui/app.js", None).await.1, "let x = 1;");
    assert_eq!(call(&app, "GET", "/ui/missing.js", None).await.0, StatusCode::NOT_FOUND);

    let bare = router(state, None);
    let (status, body) = call(&bare, "GET", "/ui/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.contains("ui_dir"));
    w.shutdown().unwrap();
}

#[tokio::test]
async fn stream_pushes_throttled_previews() {
    let frame = Duration::from_millis(10);
    let options = WorkerOptions { frame_interval: Some(frame), keep_alive: true, ..Default::default() };
    let w = common::worker(150, Hub::new(16), options);
    let app = router(ControlState::new(w.commands.clone(), w.shared.clone()), None);
    let resp = app
        .oneshot(Request::builder().uri("/api/v1/stream").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");

    let mut body = resp.into_body().into_data_stream();
    let mut text = String::new();
    let mut arrivals = Vec::new();
    while arrivals.len() < 5 {
        let chunk = tokio::time::timeout(Duration::from_secs(20), body.next()).await.unwrap().unwrap().unwrap();
        let chunk = String::from_utf8(chunk.to_vec()).unwrap();
        if chunk.contains("event: frame") {
            arrivals.push(Instant::now());
        }
        text += &chunk;
    }
    for pair in arrivals.windows(2) {
        assert!(pair[1] - pair[0] >= Duration::from_millis(95), "{:?}", pair[1] - pair[0]);
    }
    let data = text.lines().find_map(|l| l.strip_prefix("data: ")).unwrap();
    let v: Value = serde_json::from_str(data).unwrap();
    assert_eq!(v["preview"]["format"], "jpeg");
    assert_eq!(v["preview"]["width"], 640);
    assert_eq!(v["markers"][0]["id"], 7);
    assert_eq!(v["rates"][0]["object_id"], 7);
    assert!(v["frame_index"].as_u64().is_some());
    assert!(v["masses"].is_array());
    w.shutdown().unwrap();
}
