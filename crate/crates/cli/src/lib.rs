//! Subcommand implementations behind the `fidtrack` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use fidtrack_core::engine::source::{FtrkWriter, SyntheticSource};
use fidtrack_core::engine::{open_source, EngineError, StageTimings, Tracker, TrackerConfig};
use fidtrack_core::marker::{generate_dictionary, MarkerError};
use fidtrack_core::par::Execution;
use fidtrack_core::sweep::{size_sweep, sweep_csv};
use fidtrack_core::synth::{SceneError, SceneScript};
use fidtrack_core::wire::{encode_record, WireError};
use fidtrack_server::{
    control_port, router, serve_control, serve_pose_stream, spawn_worker, ControlState, Endpoint,
    Hub, ServerError, WorkerOptions, DEFAULT_BACKLOG,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Marker(#[from] MarkerError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("pose stream differs from {golden} at line {line}:\n  expected: {expected}\n  actual:   {actual}")]
    Mismatch {
        golden: PathBuf,
        line: usize,
        expected: String,
        actual: String,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source })
}

/// Loads a TOML config; relative dictionary paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<(TrackerConfig, PathBuf), CliError> {
    let cfg = TrackerConfig::from_toml(&read(path)?)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((cfg, base))
}

/// The NDJSON pose stream of a whole source, one line per frame.
pub fn pose_stream(config: &Path, source: &Path) -> Result<String, CliError> {
    let (cfg, base) = load_config(config)?;
    let mut tracker = Tracker::new(cfg, &base)?;
    let mut source = open_source(source)?;
    let mut out = String::new();
    while let Some(frame) = source.next_frame()? {
        let records = tracker.process_frame(&frame);
        out += &encode_record(frame.frame_index, frame.timestamp_us, &records)?;
    }
    Ok(out)
}

/// Compares the pose stream of `video` with `golden` byte for byte, or
/// rewrites `golden` when `bless` is set. Returns the number of lines.
pub fn replay(config: &Path, video: &Path, golden: &Path, bless: bool) -> Result<usize, CliError> {
    let actual = pose_stream(config, video)?;
    let lines = actual.lines().count();
    if bless {
        write(golden, &actual)?;
        return Ok(lines);
    }
    let expected = read(golden)?;
    if expected == actual {
        return Ok(lines);
    }
    let mut e = expected.split_inclusive('\n');
    let mut a = actual.split_inclusive('\n');
    let mut line = 1;
    loop {
        match (e.next(), a.next()) {
            (Some(x), Some(y)) if x == y => line += 1,
            (x, y) => {
                let show = |s: Option<&str>| s.map_or("<end of stream>".to_string(), |s| s.escape_debug().to_string());
                return Err(CliError::Mismatch {
                    golden: golden.into(),
                    line,
                    expected: show(x),
                    actual: show(y),
                });
            }
        }
    }
}

/// Renders a scene script into an FTRK video. Returns the frame count.
pub fn synth(script: &Path, out: &Path) -> Result<u64, CliError> {
    let source = SyntheticSource::open(script)?;
    let renderer = source.renderer();
    let s = renderer.script();
    let (w, h) = (s.camera.intrinsics.width, s.camera.intrinsics.height);
    let mut writer = FtrkWriter::create(out, w, h)?;
    for i in 0..s.frames {
        let (frame, _) = renderer.render(i)?;
        writer.write_frame(&frame)?;
    }
    writer.finish()?;
    Ok(s.frames)
}

/// Generates a dictionary and writes its text form to `out`.
pub fn dict(count: usize, d_min: u32, seed: u64, grid: u32, out: &Path) -> Result<usize, CliError> {
    let d = generate_dictionary(count, grid, d_min, seed)?;
    write(out, d.to_text())?;
    Ok(d.len())
}

/// Per-object detection counts over a whole video as CSV
/// `object_id,frames,detected,rate`, followed by a blank line and mean
/// per-stage timings in milliseconds.
pub fn bench(config: &Path, video: &Path) -> Result<String, CliError> {
    let (cfg, base) = load_config(config)?;
    let ids = cfg.object_ids();
    let mut tracker = Tracker::new(cfg, &base)?;
    let mut source = open_source(video)?;
    let mut detected = vec![0u64; ids.len()];
    let mut frames = 0u64;
    let mut totals = [Duration::ZERO; 5];
    while let Some(frame) = source.next_frame()? {
        let records = tracker.process_frame(&frame);
        frames += 1;
        for r in &records {
            if let Some(i) = ids.iter().position(|&id| id == r.object_id) {
                detected[i] += 1;
            }
        }
        for (t, d) in totals.iter_mut().zip(tracker.last_timings().as_array()) {
            *t += d;
        }
    }
    let mut out = String::from("object_id,frames,detected,rate\n");
    for (id, d) in ids.iter().zip(&detected) {
        let rate = if frames == 0 { 0.0 } else { *d as f64 / frames as f64 };
        let _ = writeln!(out, "{id},{frames},{d},{rate:.6}");
    }
    out.push_str("\nstage,mean_ms\n");
    for (name, total) in StageTimings::NAMES.iter().zip(totals) {
        let mean = if frames == 0 { 0.0 } else { total.as_secs_f64() * 1e3 / frames as f64 };
        let _ = writeln!(out, "{name},{mean:.3}");
    }
    Ok(out)
}

/// Detection rate of the script's first placement at each projected edge
/// length in `pixels`, as CSV.
pub fn sweep(config: &Path, script: &Path, pixels: &[f64]) -> Result<String, CliError> {
    let (cfg, base) = load_config(config)?;
    let s = SceneScript::from_toml(&read(script)?)?;
    let Some(first) = s.placements.first() else {
        return Err(EngineError::Config(vec!["placements: sweep needs one placement".into()]).into());
    };
    let z = first.translation[2];
    let fx = s.camera.intrinsics.fx;
    let sizes: Vec<f64> = pixels.iter().map(|px| px * z / fx).collect();
    let points = size_sweep(&s, &cfg, &base, &sizes, Execution::default())?;
    Ok(sweep_csv(&points))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured unix socket path.
    pub socket: Option<PathBuf>,
    /// Overrides the configured control port.
    pub control_port: Option<u16>,
    /// Process frames as fast as possible instead of at 30 frames per second.
    pub unpaced: bool,
    /// Keep the control API up after the source ends.
    pub keep_alive: bool,
}

/// Runs the live pipeline: pose stream, control API and worker. Returns the
/// number of frames processed.
pub fn run(config: &Path, source: &Path, opts: &RunOptions) -> Result<u64, CliError> {
    let (mut cfg, base) = load_config(config)?;
    if let Some(p) = &opts.socket {
        cfg.stream.path = p.display().to_string();
    }
    let port = match opts.control_port {
        Some(p) => p,
        None => control_port(&cfg.control)?,
    };
    let ui_dir = cfg.control.ui_dir.as_ref().map(|d| base.join(d));
    let endpoint = Endpoint::from_config(&cfg.stream);
    let tracker = Tracker::new(cfg, &base)?;
    let source = open_source(source)?;

    let runtime = tokio::runtime::Runtime::new().map_err(ServerError::Io)?;
    let hub = Hub::new(DEFAULT_BACKLOG);
    let pose_server = runtime.block_on(serve_pose_stream(endpoint, hub.clone()))?;
    log::info!("pose stream on {}", pose_server.endpoint());

    let options = WorkerOptions {
        frame_interval: (!opts.unpaced).then(|| Duration::from_micros(fidtrack_core::synth::FRAME_INTERVAL_US)),
        keep_alive: opts.keep_alive,
        ..Default::default()
    };
    let worker = spawn_worker(tracker, source, hub, options);
    let app = router(ControlState::new(worker.commands.clone(), worker.shared.clone()), ui_dir);
    let (addr, serve) = runtime.block_on(serve_control(port, app))?;
    log::info!("control api on http://{addr}/api/v1/state");
    let control = runtime.spawn(serve);

    let frames = worker.join();
    control.abort();
    drop(pose_server);
    Ok(frames?)
}
