#![allow(dead_code)]

use fidtrack_core::colored_points::{ColorClass, HsvRange, ObjectTopology};
use fidtrack_core::engine::config::MarkerSpec;
use fidtrack_core::engine::TrackerConfig;
use fidtrack_core::geometry::{
    axis_angle_to_matrix, matrix_to_axis_angle, AxisAngle, CameraIntrinsics, DistortionCoeffs,
};
use fidtrack_core::synth::{CameraSpec, Placement, PlacementKind, DISK_RADIUS_FRACTION};

pub const COLORS: [[u8; 3]; 4] = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 255, 0]];

pub fn camera() -> CameraSpec {
    CameraSpec {
        intrinsics: CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 640, 480).unwrap(),
        distortion: DistortionCoeffs::zero(),
    }
}

/// Axis-angle of a marker facing the camera, tilted about the image x and
/// y axes and spun about its own normal (radians).
pub fn facing(tilt_x: f64, tilt_y: f64, spin: f64) -> [f64; 3] {
    let r = axis_angle_to_matrix(AxisAngle::new(tilt_x, tilt_y, 0.0))
        * axis_angle_to_matrix(AxisAngle::new(std::f64::consts::PI, 0.0, 0.0))
        * axis_angle_to_matrix(AxisAngle::new(0.0, 0.0, spin));
    let aa = matrix_to_axis_angle(&r);
    [aa.0.x, aa.0.y, aa.0.z]
}

pub fn binary(id: u32, size: f64, rotation: [f64; 3], translation: [f64; 3]) -> Placement {
    Placement {
        kind: PlacementKind::Binary { id, flip_bits: vec![] },
        size,
        rotation,
        translation,
        velocity: [0.0; 3],
        angular_velocity: [0.0; 3],
        visible: None,
    }
}

pub fn colored(object_id: u32, size: f64, rotation: [f64; 3], translation: [f64; 3]) -> Placement {
    Placement {
        kind: PlacementKind::Colored {
            object_id,
            colors: COLORS,
            surface: None,
            hidden_corners: vec![],
        },
        size,
        rotation,
        translation,
        velocity: [0.0; 3],
        angular_velocity: [0.0; 3],
        visible: None,
    }
}

pub fn classes() -> Vec<ColorClass> {
    let range = |h_lo, h_hi| HsvRange {
        h_lo,
        h_hi,
        s_lo: 0.5,
        s_hi: 1.0,
        v_lo: 0.3,
        v_hi: 1.0,
    };
    vec![
        ColorClass { id: 0, name: "red".into(), range: range(340.0, 20.0) },
        ColorClass { id: 1, name: "green".into(), range: range(100.0, 140.0) },
        ColorClass { id: 2, name: "blue".into(), range: range(220.0, 260.0) },
        ColorClass { id: 3, name: "yellow".into(), range: range(50.0, 70.0) },
    ]
}

/// Tracks binary marker `marker` and a colored square `object` drawn in [`COLORS`].
pub fn config(marker: Option<(u32, f64)>, object: Option<(u32, f64)>) -> TrackerConfig {
    let mut c = TrackerConfig::new(camera());
    c.colored_points.classes = classes();
    if let Some((id, size)) = marker {
        c.binary.markers.push(MarkerSpec { id, size });
    }
    if let Some((object_id, size)) = object {
        c.colored_points.topologies.push(ObjectTopology {
            object_id,
            lines: [[0, 1], [3, 2]],
            marker_size: size,
            disk_radius: DISK_RADIUS_FRACTION * size,
        });
    }
    c
}
