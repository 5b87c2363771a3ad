//! Per-stream tracking pipeline: background removal, both detectors, pose
//! solving, smoothing state and detection-rate bookkeeping.

pub mod config;
pub mod rate;
pub mod source;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::colored_points::{resolve_topology, ColorMass, ColoredPointsTracker, TopologyResolution};
use crate::imaging::{apply_mask, background_mask_with, Frame, ImagingError};
use crate::marker::{detect_markers, DetectedMarker, DetectorParams, MarkerDictionary, MarkerError, QuadParams};
use crate::par::Execution;
use crate::pose::{solve_planar_pose_disks, PoseResult};
use crate::record::{DetectionRecord, ObjectKind};
use crate::synth::SceneError;

pub use config::{TrackerConfig, CONFIG_SCHEMA};
pub use rate::{DetectionRateTracker, RATE_WINDOW};
pub use source::{capture_background, open_source, BackgroundAccumulator, FrameSource};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("unknown object id {0}")]
    UnknownObject(u32),
    #[error("frame source exhausted")]
    SourceExhausted,
    #[error("background subtraction is disabled")]
    BackgroundDisabled,
    #[error("{0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Marker(#[from] MarkerError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Io(e.to_string())
    }
}

impl EngineError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        EngineError::Io(format!("{}: {e}", path.display()))
    }
}

/// Wall time spent in each stage of the last processed frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub background: Duration,
    pub colored_points: Duration,
    pub binary: Duration,
    pub pose: Duration,
    pub total: Duration,
}

impl StageTimings {
    pub const NAMES: [&'static str; 5] = ["background", "colored_points", "binary", "pose", "total"];

    pub fn as_array(&self) -> [Duration; 5] {
        [self.background, self.colored_points, self.binary, self.pose, self.total]
    }
}

/// Detector output of the last frame, for previews.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameOverlay {
    pub frame_index: u64,
    pub masses: Vec<ColorMass>,
    pub markers: Vec<DetectedMarker>,
}

/// One pipeline worker's state. Not shared: configuration changes go
/// through [`Tracker::apply_config`] between frames.
pub struct Tracker {
    config: TrackerConfig,
    base_dir: PathBuf,
    dictionary: Option<MarkerDictionary>,
    colored: ColoredPointsTracker,
    background: Option<Frame>,
    capture: Option<BackgroundAccumulator>,
    rates: DetectionRateTracker,
    exec: Execution,
    overlay: FrameOverlay,
    timings: StageTimings,
    frames_processed: u64,
}

impl Tracker {
    /// Dictionary paths in the config resolve against `base_dir`.
    pub fn new(config: TrackerConfig, base_dir: &Path) -> Result<Self, EngineError> {
        config.validate()?;
        let dictionary = load_dictionary(&config, base_dir)?;
        let mut t = Self {
            colored: ColoredPointsTracker::new(
                config.colored_points.classes.clone(),
                config.colored_points.params,
            ),
            rates: DetectionRateTracker::with_objects(config.object_ids()),
            capture: None,
            background: None,
            dictionary,
            base_dir: base_dir.to_path_buf(),
            exec: Execution::default(),
            overlay: FrameOverlay::default(),
            timings: StageTimings::default(),
            frames_processed: 0,
            config,
        };
        if t.config.background.enabled {
            t.capture = Some(BackgroundAccumulator::new(t.config.background.capture_frames));
        }
        Ok(t)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn dictionary(&self) -> Option<&MarkerDictionary> {
        self.dictionary.as_ref()
    }

    pub fn rates(&self) -> &DetectionRateTracker {
        &self.rates
    }

    pub fn detection_rate(&self, object_id: u32) -> Result<f64, EngineError> {
        self.rates.rate(object_id)
    }

    pub fn overlay(&self) -> &FrameOverlay {
        &self.overlay
    }

    pub fn last_timings(&self) -> StageTimings {
        self.timings
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames_processed
    }

    pub fn background(&self) -> Option<&Frame> {
        self.background.as_ref()
    }

    /// Frames still needed by a pending background capture.
    pub fn capture_pending(&self) -> Option<u32> {
        self.capture.as_ref().map(|c| c.remaining())
    }

    /// Replaces the configuration. Smoothing history is kept when the color
    /// setup is unchanged; rate history is kept for objects that remain.
    pub fn apply_config(&mut self, config: TrackerConfig) -> Result<(), EngineError> {
        config.validate()?;
        let dictionary = if config.binary.dictionary == self.config.binary.dictionary
            && self.dictionary.is_some()
        {
            self.dictionary.clone()
        } else {
            load_dictionary(&config, &self.base_dir)?
        };
        if config.colored_points.classes != self.config.colored_points.classes {
            self.colored = ColoredPointsTracker::new(
                config.colored_points.classes.clone(),
                config.colored_points.params,
            );
        } else {
            self.colored.config = config.colored_points.params;
        }
        self.rates.retain_objects(&config.object_ids());
        if !config.background.enabled {
            self.background = None;
            self.capture = None;
        } else if !self.config.background.enabled {
            self.capture = Some(BackgroundAccumulator::new(config.background.capture_frames));
        }
        self.dictionary = dictionary;
        self.config = config;
        Ok(())
    }

    /// Starts averaging the next `frames` frames into a new background.
    pub fn request_background_capture(&mut self, frames: u32) -> Result<(), EngineError> {
        if !self.config.background.enabled {
            return Err(EngineError::BackgroundDisabled);
        }
        if frames == 0 {
            return Err(EngineError::Config(vec!["frames: must be >= 1".into()]));
        }
        self.capture = Some(BackgroundAccumulator::new(frames));
        Ok(())
    }

    pub fn set_background(&mut self, background: Frame) {
        self.background = Some(background);
        self.capture = None;
    }

    /// Runs the whole pipeline on one frame. Failures inside a stage only
    /// mark the affected objects as not detected. Records are sorted by id.
    pub fn process_frame(&mut self, frame: &Frame) -> Vec<DetectionRecord> {
        let start = Instant::now();
        let mut timings = StageTimings::default();
        let k = self.config.camera.intrinsics;
        let d = self.config.camera.distortion;

        // Frames feeding a pending capture are processed unmasked.
        let t0 = Instant::now();
        if let Some(acc) = &mut self.capture {
            match acc.push(frame) {
                Ok(Some(bg)) => {
                    self.background = Some(bg);
                    self.capture = None;
                }
                Ok(None) => {}
                Err(e) => {
                    log::warn!("background capture reset: {e}");
                    self.capture = Some(BackgroundAccumulator::new(
                        self.config.background.capture_frames,
                    ));
                }
            }
        }
        let masked = match (&self.background, self.config.background.enabled) {
            (Some(bg), true) => background_mask_with(frame, bg, self.config.background.threshold, self.exec)
                .and_then(|m| apply_mask(frame, &m))
                .map_err(|e| log::warn!("background mask skipped: {e}"))
                .ok(),
            _ => None,
        };
        timings.background = t0.elapsed();

        let t1 = Instant::now();
        let masses = self
            .colored
            .update(masked.as_ref().unwrap_or(frame), self.exec)
            .to_vec();
        timings.colored_points = t1.elapsed();

        let t2 = Instant::now();
        let markers = match (&self.dictionary, self.config.binary.enabled) {
            (Some(dict), true) => {
                let params = DetectorParams {
                    window: self.config.binary.window,
                    offset: self.config.binary.offset,
                    quads: QuadParams {
                        min_area: self.config.binary.min_area,
                        ..QuadParams::default()
                    },
                };
                let gray = frame.to_gray_with(self.exec);
                detect_markers(&gray, dict, &params, self.exec).unwrap_or_else(|e| {
                    log::warn!("binary detection failed: {e}");
                    Vec::new()
                })
            }
            _ => Vec::new(),
        };
        timings.binary = t2.elapsed();

        let t3 = Instant::now();
        let mut records = Vec::new();
        let solve = |id: u32, corners: &[crate::geometry::Vec2; 4], size: f64, disk: f64| {
            solve_planar_pose_disks(corners, size, disk, &k, &d)
                .map_err(|e| log::debug!("object {id}: {e}"))
                .ok()
        };
        let mut record = |id: u32, kind: ObjectKind, res: Option<PoseResult>| {
            if let Some(res) = res {
                records.push(DetectionRecord {
                    frame_index: frame.frame_index,
                    timestamp_us: frame.timestamp_us,
                    object_id: id,
                    kind,
                    pose: res.best.pose,
                    rms_error: res.best.rms_error,
                    ambiguous: res.ambiguous,
                });
            }
        };
        let mut tracked_markers = Vec::with_capacity(markers.len());
        if self.config.binary.enabled {
            for m in &markers {
                if let Some(spec) = self.config.binary.markers.iter().find(|s| s.id == m.id) {
                    // Keep whichever corner set a planar square of the known size fits better.
                    let mut corners = m.corners;
                    let mut best = solve(m.id, &corners, spec.size, 0.0);
                    if let Some(edge) = m.edge_corners {
                        let alt = solve(m.id, &edge, spec.size, 0.0);
                        let rms = |r: &Option<PoseResult>| r.as_ref().map_or(f64::INFINITY, |r| r.best.rms_error);
                        if rms(&alt) < rms(&best) {
                            (corners, best) = (edge, alt);
                        }
                    }
                    record(m.id, ObjectKind::Binary, best);
                    tracked_markers.push(DetectedMarker {
                        corners,
                        marker_size: Some(spec.size),
                        ..*m
                    });
                }
            }
        }
        for topo in &self.config.colored_points.topologies {
            if let TopologyResolution::Resolved(corners) = resolve_topology(&masses, topo) {
                let res = solve(topo.object_id, &corners, topo.marker_size, topo.disk_radius);
                record(topo.object_id, ObjectKind::Colored, res);
            }
        }
        records.sort_by_key(|r| r.object_id);
        timings.pose = t3.elapsed();

        for id in self.rates.object_ids() {
            let detected = records.iter().any(|r| r.object_id == id);
            let _ = self.rates.record(id, detected);
        }
        self.overlay = FrameOverlay {
            frame_index: frame.frame_index,
            masses,
            markers: tracked_markers,
        };
        timings.total = start.elapsed();
        self.timings = timings;
        self.frames_processed += 1;
        records
    }
}

fn load_dictionary(config: &TrackerConfig, base_dir: &Path) -> Result<Option<MarkerDictionary>, EngineError> {
    if !config.binary.enabled {
        return Ok(None);
    }
    let dict = config.binary.dictionary.load(base_dir)?;
    let out_of_range: Vec<String> = config
        .binary
        .markers
        .iter()
        .filter(|m| m.id as usize >= dict.len())
        .map(|m| format!("binary.markers: id {} exceeds dictionary size {}", m.id, dict.len()))
        .collect();
    if !out_of_range.is_empty() {
        return Err(EngineError::Config(out_of_range));
    }
    Ok(Some(dict))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_frame_yields_no_records() {
        let cfg = config::tests_support::sample();
        let mut t = Tracker::new(cfg, Path::new(".")).unwrap();
        let f = Frame::filled(640, 480, [0, 0, 0]);
        assert!(t.process_frame(&f).is_empty());
        assert_eq!(t.detection_rate(7).unwrap(), 0.0);
        assert_eq!(t.frames_processed(), 1);
    }

    #[test]
    fn capture_rejected_when_disabled() {
        let mut t = Tracker::new(config::tests_support::sample(), Path::new(".")).unwrap();
        assert!(matches!(
            t.request_background_capture(1),
            Err(EngineError::BackgroundDisabled)
        ));
    }
}
