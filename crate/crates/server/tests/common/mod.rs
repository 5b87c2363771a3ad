#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fidtrack_core::engine::config::MarkerSpec;
use fidtrack_core::engine::source::SyntheticSource;
use fidtrack_core::engine::{Tracker, TrackerConfig};
use fidtrack_core::geometry::{CameraIntrinsics, DistortionCoeffs};
use fidtrack_core::synth::{CameraSpec, Placement, PlacementKind, Renderer, SceneScript};
use fidtrack_server::{spawn_worker, Hub, WorkerHandle, WorkerOptions};

pub fn camera() -> CameraSpec {
    CameraSpec {
        intrinsics: CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 640, 480).unwrap(),
        distortion: DistortionCoeffs::zero(),
    }
}

pub fn config() -> TrackerConfig {
    let mut c = TrackerConfig::new(camera());
    c.binary.markers.push(MarkerSpec { id: 7, size: 0.05 });
    c
}

/// A binary marker 7 in full view of every frame.
pub fn script(frames: u64) -> SceneScript {
    let mut s = SceneScript::new(camera(), frames);
    s.placements.push(Placement {
        kind: PlacementKind::Binary { id: 7, flip_bits: vec![] },
        size: 0.05,
        rotation: [3.0, 0.2, 0.1],
        translation: [0.01, 0.02, 0.5],
        velocity: [0.0001, 0.0, 0.0],
        angular_velocity: [0.0; 3],
        visible: None,
    });
    s
}

pub fn worker(frames: u64, hub: Arc<Hub>, options: WorkerOptions) -> WorkerHandle {
    let tracker = Tracker::new(config(), Path::new(".")).unwrap();
    let renderer = Renderer::new(script(frames), tracker.dictionary().cloned()).unwrap();
    spawn_worker(tracker, Box::new(SyntheticSource::new(renderer)), hub, options)
}

pub fn wait_until(what: &str, mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(30);
    while !cond() {
        assert!(Instant::now() < deadline, "timed out waiting for {what}");
        std::thread::sleep(Duration::from_millis(5));
    }
}
