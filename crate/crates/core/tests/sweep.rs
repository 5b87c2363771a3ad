mod common;

use std::path::Path;

use common::{binary, camera, facing};
use fidtrack_core::engine::config::MarkerSpec;
use fidtrack_core::engine::TrackerConfig;
use fidtrack_core::par::Execution;
use fidtrack_core::sweep::{size_sweep, sweep_csv};
use fidtrack_core::synth::SceneScript;

#[test]
fn rate_rises_from_zero_to_one_with_size() {
    let z = 0.8;
    let mut s = SceneScript::new(camera(), 60);
    let mut m = binary(3, 0.05, facing(0.2, 0.1, 0.3), [0.01, -0.01, z]);
    m.velocity = [0.00005, 0.0, 0.0];
    s.placements = vec![m];
    let mut cfg = TrackerConfig::new(camera());
    cfg.binary.markers.push(MarkerSpec { id: 3, size: 0.05 });

    let sizes: Vec<f64> = [4.0, 8.0, 24.0, 48.0].iter().map(|px| px * z / 800.0).collect();
    let points = size_sweep(&s, &cfg, Path::new("."), &sizes, Execution::default()).unwrap();
    let rates: Vec<f64> = points.iter().map(|p| p.rate).collect();
    assert_eq!(rates, vec![0.0, 0.0, 1.0, 1.0]);
    assert!((points[2].projected_px - 24.0).abs() < 1e-9);

    let csv = sweep_csv(&points);
    assert!(csv.starts_with("size_m,projected_px,detection_rate\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn bad_sizes_are_rejected() {
    let mut s = SceneScript::new(camera(), 1);
    s.placements = vec![binary(3, 0.05, facing(0.0, 0.0, 0.0), [0.0, 0.0, 0.5])];
    let cfg = TrackerConfig::new(camera());
    assert!(size_sweep(&s, &cfg, Path::new("."), &[0.01, -1.0], Execution::Sequential).is_err());
    assert!(size_sweep(&SceneScript::new(camera(), 1), &cfg, Path::new("."), &[0.01], Execution::Sequential).is_err());
}
