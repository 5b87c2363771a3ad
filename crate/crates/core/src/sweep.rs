//! Detection rate against marker size at a fixed distance.

use std::fmt::Write as _;
use std::path::Path;

use crate::engine::config::MarkerSpec;
use crate::engine::{EngineError, Tracker, TrackerConfig, RATE_WINDOW};
use crate::par::{self, Execution};
use crate::synth::{PlacementKind, Renderer, SceneScript};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// Marker edge in meters.
    pub size: f64,
    /// Frontal edge length in pixels at the placement's starting distance.
    pub projected_px: f64,
    /// Detection rate over the last 60 frames.
    pub rate: f64,
}

/// Runs the full pipeline on `template` once per size, with the first
/// placement's edge set to that size, rendered with the tracker's own
/// dictionary. The tracker config is adjusted so the object is tracked at
/// the swept size. At least 60 frames are processed per size; sizes run in
/// parallel under [`Execution::Parallel`], each on its own sequential tracker.
pub fn size_sweep(
    template: &SceneScript,
    config: &TrackerConfig,
    base_dir: &Path,
    sizes: &[f64],
    exec: Execution,
) -> Result<Vec<SweepPoint>, EngineError> {
    let Some(first) = template.placements.first() else {
        return Err(EngineError::Config(vec!["placements: sweep needs one placement".into()]));
    };
    if let Some(bad) = sizes.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(EngineError::Config(vec![format!("sizes: {bad} is not positive")]));
    }
    let object_id = first.object_id();
    let fx = template.camera.intrinsics.fx;
    let z = first.translation[2];
    let frames = template.frames.max(RATE_WINDOW as u64);

    let results = par::map_slice(exec, sizes, |&size| -> Result<SweepPoint, EngineError> {
        let mut script = template.clone();
        script.frames = frames;
        let scale = size / script.placements[0].size;
        script.placements[0].size = size;

        let mut cfg = config.clone();
        match script.placements[0].kind {
            PlacementKind::Binary { id, .. } => {
                cfg.binary.markers.retain(|m| m.id != id);
                cfg.binary.markers.push(MarkerSpec { id, size });
                cfg.binary.markers.sort_by_key(|m| m.id);
            }
            PlacementKind::Colored { object_id, .. } => {
                for t in cfg.colored_points.topologies.iter_mut().filter(|t| t.object_id == object_id) {
                    t.marker_size = size;
                    t.disk_radius *= scale;
                }
            }
        }

        let mut tracker = Tracker::new(cfg, base_dir)?.with_execution(Execution::Sequential);
        let renderer = Renderer::new(script, tracker.dictionary().cloned())?;
        for index in 0..frames {
            let (frame, _) = renderer.render_with(index, Execution::Sequential)?;
            tracker.process_frame(&frame);
        }
        Ok(SweepPoint {
            size,
            projected_px: fx * size / z,
            rate: tracker.detection_rate(object_id)?,
        })
    });
    results.into_iter().collect()
}

/// `size_m,projected_px,detection_rate` with a header line.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("size_m,projected_px,detection_rate\n");
    for p in points {
        let _ = writeln!(out, "{:.6},{:.3},{:.6}", p.size, p.projected_px, p.rate);
    }
    out
}
