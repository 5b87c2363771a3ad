//! The pipeline worker: one thread that owns the tracker, pulls frames,
//! publishes one pose line per frame, and applies queued commands only
//! between frames.

use std::sync::mpsc::{self, RecvTimeoutError, TryRecvError};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use fidtrack_core::engine::{EngineError, FrameSource, Tracker, TrackerConfig};
use fidtrack_core::record::ObjectKind;
use fidtrack_core::wire::encode_record;
use serde::Serialize;
use tokio::sync::{oneshot, watch};

use crate::hub::Hub;
use crate::preview::{preview_message, PreviewMessage};

pub enum Command {
    /// Validated and applied before the next frame; the reply carries the
    /// applied document or the violated invariants.
    ApplyConfig(TrackerConfig, oneshot::Sender<Result<TrackerConfig, EngineError>>),
    CaptureBackground(u32, oneshot::Sender<Result<(), EngineError>>),
    Shutdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    /// The source is exhausted; commands are still served.
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectState {
    pub object_id: u32,
    pub kind: ObjectKind,
    pub rate: f64,
    pub frames_seen: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackgroundState {
    pub enabled: bool,
    pub captured: bool,
    /// Frames still to be averaged by a running capture.
    pub capture_pending: Option<u32>,
}

/// Snapshot served by `GET /api/v1/state`, refreshed after every frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineState {
    pub status: Status,
    pub frames_processed: u64,
    pub last_frame_index: Option<u64>,
    pub background: BackgroundState,
    pub objects: Vec<ObjectState>,
    pub consumers: usize,
    pub error: Option<String>,
    #[serde(skip)]
    pub config: TrackerConfig,
}

pub struct Shared {
    state: RwLock<EngineState>,
    preview: watch::Sender<Option<Arc<PreviewMessage>>>,
}

impl Shared {
    pub fn state(&self) -> EngineState {
        self.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn previews(&self) -> watch::Receiver<Option<Arc<PreviewMessage>>> {
        self.preview.subscribe()
    }

    fn update(&self, f: impl FnOnce(&mut EngineState)) {
        f(&mut self.state.write().unwrap_or_else(|e| e.into_inner()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerOptions {
    /// Wall time per frame; `None` processes frames as fast as possible.
    pub frame_interval: Option<Duration>,
    /// Minimum wall time between preview messages.
    pub preview_interval: Duration,
    /// Keep serving commands once the source is exhausted.
    pub keep_alive: bool,
}

impl Default for WorkerOptions {
    fn default() -> Self {
        Self {
            frame_interval: None,
            preview_interval: Duration::from_millis(100),
            keep_alive: false,
        }
    }
}

pub struct WorkerHandle {
    pub commands: mpsc::Sender<Command>,
    pub shared: Arc<Shared>,
    thread: JoinHandle<Result<u64, EngineError>>,
}

impl WorkerHandle {
    /// Waits for the worker and returns the number of frames processed.
    pub fn join(self) -> Result<u64, EngineError> {
        drop(self.commands);
        self.thread
            .join()
            .unwrap_or_else(|_| Err(EngineError::Format("pipeline worker panicked".into())))
    }

    pub fn shutdown(self) -> Result<u64, EngineError> {
        let _ = self.commands.send(Command::Shutdown);
        self.join()
    }
}

fn snapshot(tracker: &Tracker, hub: &Hub, status: Status, error: Option<String>) -> EngineState {
    let config = tracker.config().clone();
    let kind = |id: u32| {
        if config.binary.markers.iter().any(|m| m.id == id) {
            ObjectKind::Binary
        } else {
            ObjectKind::Colored
        }
    };
    EngineState {
        status,
        frames_processed: tracker.frames_processed(),
        last_frame_index: (tracker.frames_processed() > 0).then(|| tracker.overlay().frame_index),
        background: BackgroundState {
            enabled: config.background.enabled,
            captured: tracker.background().is_some(),
            capture_pending: tracker.capture_pending(),
        },
        objects: tracker
            .rates()
            .rates()
            .into_iter()
            .map(|(object_id, rate)| ObjectState {
                object_id,
                kind: kind(object_id),
                rate,
                frames_seen: tracker.rates().frames_seen(object_id).unwrap_or(0),
            })
            .collect(),
        consumers: hub.consumer_count(),
        error,
        config,
    }
}

/// Returns `false` on shutdown.
fn handle(tracker: &mut Tracker, shared: &Shared, hub: &Hub, cmd: Command, status: Status) -> bool {
    match cmd {
        Command::ApplyConfig(cfg, reply) => {
            let result = tracker.apply_config(cfg).map(|()| tracker.config().clone());
            shared.update(|s| *s = snapshot(tracker, hub, status, s.error.clone()));
            let _ = reply.send(result);
        }
        Command::CaptureBackground(frames, reply) => {
            let result = tracker.request_background_capture(frames);
            shared.update(|s| *s = snapshot(tracker, hub, status, s.error.clone()));
            let _ = reply.send(result);
        }
        Command::Shutdown => return false,
    }
    true
}

/// Starts the worker thread. Each frame's records go to `hub` as one
/// encoded line, empty frames included.
pub fn spawn_worker(
    mut tracker: Tracker,
    mut source: Box<dyn FrameSource>,
    hub: Arc<Hub>,
    options: WorkerOptions,
) -> WorkerHandle {
    let (tx, rx) = mpsc::channel::<Command>();
    let (preview, _) = watch::channel(None);
    let shared = Arc::new(Shared {
        state: RwLock::new(snapshot(&tracker, &hub, Status::Running, None)),
        preview,
    });
    let worker_shared = shared.clone();
    let thread = std::thread::Builder::new()
        .name("fidtrack-pipeline".into())
        .spawn(move || {
            let shared = worker_shared;
            let start = Instant::now();
            let mut last_preview: Option<Instant> = None;
            let mut outcome = Ok(());
            let mut stopped = false;
            'frames: loop {
                loop {
                    match rx.try_recv() {
                        Ok(cmd) => {
                            if !handle(&mut tracker, &shared, &hub, cmd, Status::Running) {
                                stopped = true;
                                break 'frames;
                            }
                        }
                        Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
                    }
                }
                let frame = match source.next_frame() {
                    Ok(Some(f)) => f,
                    Ok(None) => break,
                    Err(e) => {
                        outcome = Err(e);
                        break;
                    }
                };
                let records = tracker.process_frame(&frame);
                match encode_record(frame.frame_index, frame.timestamp_us, &records) {
                    Ok(line) => {
                        hub.publish(line.into());
                    }
                    Err(e) => log::error!("frame {}: {e}", frame.frame_index),
                }
                shared.update(|s| *s = snapshot(&tracker, &hub, Status::Running, None));

                let due = last_preview.is_none_or(|t| t.elapsed() >= options.preview_interval);
                if due && shared.preview.receiver_count() > 0 {
                    let msg = preview_message(&frame, tracker.overlay(), &tracker.rates().rates());
                    shared.preview.send_replace(Some(Arc::new(msg)));
                    last_preview = Some(Instant::now());
                }

                if let Some(interval) = options.frame_interval {
                    let target = start + interval * (tracker.frames_processed() as u32);
                    // Commands arriving while pacing are still applied before the next frame.
                    if let Some(wait) = target.checked_duration_since(Instant::now()) {
                        std::thread::sleep(wait);
                    }
                }
            }

            let (status, error) = match &outcome {
                Ok(()) => (Status::Finished, None),
                Err(e) => (Status::Failed, Some(e.to_string())),
            };
            shared.update(|s| *s = snapshot(&tracker, &hub, status, error.clone()));
            if options.keep_alive && !stopped {
                loop {
                    match rx.recv_timeout(Duration::from_millis(500)) {
                        Ok(cmd) => {
                            if !handle(&mut tracker, &shared, &hub, cmd, status) {
                                break;
                            }
                        }
                        Err(RecvTimeoutError::Timeout) => {
                            shared.update(|s| s.consumers = hub.consumer_count());
                        }
                        Err(RecvTimeoutError::Disconnected) => break,
                    }
                }
            }
            outcome.map(|()| tracker.frames_processed())
        })
        .expect("spawning the pipeline thread");
    WorkerHandle { commands: tx, shared, thread }
}
