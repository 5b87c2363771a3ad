mod common;

use std::path::Path;

use common::{camera, classes, colored, config, facing, COLORS};
use fidtrack_core::colored_points::{
    classify_and_cluster, linked_components, ColoredPointsConfig, ColoredPointsTracker,
};
use fidtrack_core::engine::Tracker;
use fidtrack_core::geometry::{rotation_angle_between, Vec2};
use fidtrack_core::imaging::Frame;
use fidtrack_core::par::Execution;
use fidtrack_core::synth::{scattered_blobs, Renderer, SceneScript};

fn block(at: (u32, u32)) -> Frame {
    let mut f = Frame::filled(160, 120, [0, 0, 0]);
    for y in at.1..at.1 + 10 {
        for x in at.0..at.0 + 10 {
            f.set_pixel(x, y, COLORS[0]);
        }
    }
    f
}

#[test]
fn step_response_follows_the_recurrence() {
    let cfg = ColoredPointsConfig::default();
    let mut tracker = ColoredPointsTracker::new(classes(), cfg);
    let (a, b) = (Vec2::new(44.5, 34.5), Vec2::new(74.5, 54.5));
    for _ in 0..3 {
        tracker.update(&block((40, 30)), Execution::Sequential);
    }
    assert!((tracker.masses()[0].smoothed_centroid - a).norm() < 1e-12);
    let mut expected = a;
    for n in 1..=20 {
        let masses = tracker.update(&block((70, 50)), Execution::Sequential);
        expected = b * 0.7 + expected * 0.3;
        let s = masses[0].smoothed_centroid;
        assert!((s - expected).norm() < 1e-9, "step {n}");
        // Closed form of the same recurrence: residual (a - b)·0.3ⁿ.
        assert!((s - (b + (a - b) * 0.3f64.powi(n))).norm() < 1e-9, "step {n}");
    }
}

#[test]
fn clustering_matches_linked_components() {
    let colors = [COLORS[0], COLORS[1], COLORS[2], [255, 40, 30]];
    let mut total = 0;
    for seed in 0..100 {
        let cutoff = 4.0 + (seed % 9) as f64;
        let cfg = ColoredPointsConfig { dist_cutoff: cutoff, min_pixels: 3, ..Default::default() };
        let frame = scattered_blobs(seed, 64, 48 + (seed % 17) as u32, cutoff, &colors);
        let online = classify_and_cluster(&frame, &classes(), &cfg);
        assert_eq!(online, linked_components(&frame, &classes(), &cfg), "seed {seed}");
        total += online.len();
    }
    assert!(total > 300, "{total}");
}

#[test]
fn moving_square_is_tracked_every_frame() {
    let size = 0.15;
    let mut s = SceneScript::new(camera(), 60);
    s.background = [60, 60, 60];
    let mut square = colored(100, size, facing(0.3, -0.2, 0.4), [0.0, 0.0, 0.5]);
    // Slow enough that the EMA lag stays inside the pose tolerance.
    square.velocity = [0.00002, -0.00001, 0.0];
    square.angular_velocity = [0.0, 0.0, 0.0002];
    s.placements = vec![square];
    let mut tracker = Tracker::new(config(None, Some((100, size))), Path::new(".")).unwrap();
    let renderer = Renderer::new(s, None).unwrap();
    for i in 0..60 {
        let (frame, truth) = renderer.render(i).unwrap();
        let records = tracker.process_frame(&frame);
        assert_eq!(records.len(), 1, "frame {i}");
        let (r, t) = (&records[0], &truth[0]);
        let z = t.pose.translation.z;
        let dt = (r.pose.translation - t.pose.translation).norm();
        let dr = rotation_angle_between(&r.pose.rotation, &t.pose.rotation).to_degrees();
        assert!(dt <= (1e-3 * z).max(1e-4) && dr <= 0.1, "frame {i}: {dt} m, {dr} deg");
    }
    assert_eq!(tracker.detection_rate(100).unwrap(), 1.0);
}
