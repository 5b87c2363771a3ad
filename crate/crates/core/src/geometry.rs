//! Camera model, rotation representations and point projection.
//!
//! Camera frame: x right, y down, z forward along the optical axis. Marker
//! models live on the z = 0 plane of their own frame. Pixel centers sit at
//! integer coordinates.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Points closer to the camera plane than this are rejected by projection.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z:e})")]
    BehindCamera { z: f64 },
    #[error("matrix is not a rotation (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("distortion coefficients must be finite")]
    InvalidDistortion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Every violated invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.fx.is_finite() && self.fx > 0.0) {
            out.push("fx must be finite and > 0".to_string());
        }
        if !(self.fy.is_finite() && self.fy > 0.0) {
            out.push("fy must be finite and > 0".to_string());
        }
        if !(self.cx.is_finite() && self.cx >= 0.0 && self.cx < self.width as f64) {
            out.push("cx must satisfy 0 <= cx < width".to_string());
        }
        if !(self.cy.is_finite() && self.cy >= 0.0 && self.cy < self.height as f64) {
            out.push("cy must satisfy 0 <= cy < height".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(msg) => Err(GeometryError::InvalidIntrinsics(msg)),
        }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        Mat3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn pixel_to_normalized(&self, p: Vec2) -> Vec2 {
        Vec2::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy)
    }

    pub fn normalized_to_pixel(&self, n: Vec2) -> Vec2 {
        Vec2::new(self.fx * n.x + self.cx, self.fy * n.y + self.cy)
    }
}

/// Five-coefficient Brown–Conrady lens distortion on normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionCoeffs {
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
    #[serde(default)]
    pub k3: f64,
}

impl DistortionCoeffs {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all = [self.k1, self.k2, self.p1, self.p2, self.k3];
        if all.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(GeometryError::InvalidDistortion)
        }
    }

    pub fn distort(&self, n: Vec2) -> Vec2 {
        let (x, y) = (n.x, n.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        Vec2::new(
            x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    /// Jacobian of [`distort`](Self::distort) with respect to the undistorted point.
    pub fn jacobian(&self, n: Vec2) -> Matrix2<f64> {
        let (x, y) = (n.x, n.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let dradial_dr2 = self.k1 + r2 * (2.0 * self.k2 + 3.0 * self.k3 * r2);
        let drx = 2.0 * x * dradial_dr2;
        let dry = 2.0 * y * dradial_dr2;
        Matrix2::new(
            radial + x * drx + 2.0 * self.p1 * y + 6.0 * self.p2 * x,
            x * dry + 2.0 * self.p1 * x + 2.0 * self.p2 * y,
            y * drx + 2.0 * self.p1 * x + 2.0 * self.p2 * y,
            radial + y * dry + 6.0 * self.p1 * y + 2.0 * self.p2 * x,
        )
    }

    /// Inverts [`distort`](Self::distort) by Newton iteration.
    pub fn undistort(&self, d: Vec2) -> Vec2 {
        if self.is_zero() {
            return d;
        }
        let mut n = d;
        for _ in 0..50 {
            let residual = self.distort(n) - d;
            let Some(inv) = self.jacobian(n).try_inverse() else {
                break;
            };
            let step = inv * residual;
            n -= step;
            if step.norm() < 1e-15 {
                break;
            }
        }
        n
    }
}

/// Rigid transform taking marker-frame points into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros())
    }

    pub fn from_axis_angle(aa: AxisAngle, translation: Vec3) -> Self {
        Self::new(axis_angle_to_matrix(aa), translation)
    }

    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Largest entrywise deviation of `RᵀR` from identity, and `|det R - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.rotation)
    }
}

pub fn orthonormality_error(r: &Mat3) -> f64 {
    let gram = r.transpose() * r - Mat3::identity();
    gram.amax().max((r.determinant() - 1.0).abs())
}

/// Rotation vector: direction is the axis, norm is the angle in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle(pub Vec3);

impl AxisAngle {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vec3::new(x, y, z))
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    /// Same rotation with angle folded into `[0, π]`. At exactly π the axis
    /// sign is fixed so its first non-negligible component is positive.
    pub fn canonical(&self) -> AxisAngle {
        let theta = self.0.norm();
        if theta == 0.0 {
            return *self;
        }
        let axis = self.0 / theta;
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut folded = theta % two_pi;
        let mut axis = axis;
        if folded > std::f64::consts::PI {
            folded = two_pi - folded;
            axis = -axis;
        }
        if folded == std::f64::consts::PI {
            axis = fix_axis_sign(axis);
        }
        AxisAngle(axis * folded)
    }
}

fn fix_axis_sign(axis: Vec3) -> Vec3 {
    for i in 0..3 {
        if axis[i].abs() > 1e-12 {
            return if axis[i] < 0.0 { -axis } else { axis };
        }
    }
    axis
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn axis_angle_to_matrix(aa: AxisAngle) -> Mat3 {
    let v = aa.0;
    let theta2 = v.norm_squared();
    let k = skew(&v);
    let (a, b) = if theta2 < 1e-12 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + k * k * b
}

/// Inverse of [`axis_angle_to_matrix`], returning the canonical form.
pub fn matrix_to_axis_angle(r: &Mat3) -> AxisAngle {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let v = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let s = v.norm();
    let theta = s.atan2(c);
    if c > -0.5 {
        // sin(theta) is well conditioned here.
        let factor = if s < 1e-12 {
            1.0 + theta * theta / 6.0
        } else {
            theta / s
        };
        return AxisAngle(v * factor);
    }
    // Near π: recover the axis from the symmetric part (1 - c)·a·aᵀ.
    let sym = (r + r.transpose()) * 0.5 - Mat3::identity() * c;
    let j = (0..3)
        .max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)]))
        .unwrap_or(0);
    let scale = (sym[(j, j)] * (1.0 - c)).sqrt();
    let mut axis = sym.column(j).into_owned() / scale;
    axis.normalize_mut();
    if s > 1e-12 {
        if axis.dot(&v) < 0.0 {
            axis = -axis;
        }
    } else {
        axis = fix_axis_sign(axis);
    }
    AxisAngle(axis * theta)
}

/// Angle in radians of the relative rotation `aᵀb`.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    matrix_to_axis_angle(&(a.transpose() * b)).angle()
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let q = Vec3::new(self.x, self.y, self.z);
        let t = q.cross(v) * 2.0;
        v + t * self.w + q.cross(&t)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }
}

/// Converts a rotation matrix to a unit quaternion with `w >= 0`.
pub fn matrix_to_quaternion(r: &Mat3) -> Result<Quaternion, GeometryError> {
    let deviation = orthonormality_error(r);
    if !(deviation <= 1e-6) {
        return Err(GeometryError::NotOrthonormal { deviation });
    }
    let m = |i: usize, j: usize| r[(i, j)];
    let trace = r.trace();
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        Quaternion {
            w: 0.25 * s,
            x: (m(2, 1) - m(1, 2)) / s,
            y: (m(0, 2) - m(2, 0)) / s,
            z: (m(1, 0) - m(0, 1)) / s,
        }
    } else if m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2) {
        let s = (1.0 + m(0, 0) - m(1, 1) - m(2, 2)).sqrt() * 2.0;
        Quaternion {
            w: (m(2, 1) - m(1, 2)) / s,
            x: 0.25 * s,
            y: (m(0, 1) + m(1, 0)) / s,
            z: (m(0, 2) + m(2, 0)) / s,
        }
    } else if m(1, 1) > m(2, 2) {
        let s = (1.0 + m(1, 1) - m(0, 0) - m(2, 2)).sqrt() * 2.0;
        Quaternion {
            w: (m(0, 2) - m(2, 0)) / s,
            x: (m(0, 1) + m(1, 0)) / s,
            y: 0.25 * s,
            z: (m(1, 2) + m(2, 1)) / s,
        }
    } else {
        let s = (1.0 + m(2, 2) - m(0, 0) - m(1, 1)).sqrt() * 2.0;
        Quaternion {
            w: (m(1, 0) - m(0, 1)) / s,
            x: (m(0, 2) + m(2, 0)) / s,
            y: (m(1, 2) + m(2, 1)) / s,
            z: 0.25 * s,
        }
    };
    let n = q.norm();
    let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
    Ok(Quaternion {
        w: sign * q.w / n,
        x: sign * q.x / n,
        y: sign * q.y / n,
        z: sign * q.z / n,
    })
}

/// Projects a marker-frame point to pixels through the pose, distortion and intrinsics.
pub fn project_point(
    pose: &Pose,
    model_point: &Vec3,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<Vec2, GeometryError> {
    project_camera_point(&pose.transform(model_point), k, d)
}

pub fn project_camera_point(
    pc: &Vec3,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<Vec2, GeometryError> {
    if !(pc.z > MIN_DEPTH) {
        return Err(GeometryError::BehindCamera { z: pc.z });
    }
    let n = Vec2::new(pc.x / pc.z, pc.y / pc.z);
    Ok(k.normalized_to_pixel(d.distort(n)))
}

/// Projection together with its Jacobian with respect to the camera-frame point.
pub fn project_camera_point_with_jacobian(
    pc: &Vec3,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<(Vec2, Matrix2x3<f64>), GeometryError> {
    if !(pc.z > MIN_DEPTH) {
        return Err(GeometryError::BehindCamera { z: pc.z });
    }
    let iz = 1.0 / pc.z;
    let n = Vec2::new(pc.x * iz, pc.y * iz);
    let dn_dp = Matrix2x3::new(iz, 0.0, -pc.x * iz * iz, 0.0, iz, -pc.y * iz * iz);
    let dd_dn = d.jacobian(n);
    let f = Matrix2::new(k.fx, 0.0, 0.0, k.fy);
    Ok((k.normalized_to_pixel(d.distort(n)), f * dd_dn * dn_dp))
}

/// Maps a distorted pixel to the pixel an ideal pinhole camera would observe.
pub fn undistort_pixel(p: Vec2, k: &CameraIntrinsics, d: &DistortionCoeffs) -> Vec2 {
    if d.is_zero() {
        return p;
    }
    k.normalized_to_pixel(d.undistort(k.pixel_to_normalized(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn k500() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = project_point(&Pose::identity(), &Vec3::new(0.0, 0.0, 1.0), &k500(), &DistortionCoeffs::zero())
            .unwrap();
        assert_eq!(p, Vec2::new(320.0, 240.0));
        let p = project_point(&Pose::identity(), &Vec3::new(0.1, 0.0, 1.0), &k500(), &DistortionCoeffs::zero())
            .unwrap();
        assert!((p - Vec2::new(370.0, 240.0)).norm() < 1e-12);
    }

    #[test]
    fn radial_distortion_matches_direct_evaluation() {
        // x = 0.1, r² = 0.01: x·(1 + 0.1·0.01) = 0.1001 → 500·0.1001 + 320.
        let d = DistortionCoeffs {
            k1: 0.1,
            ..Default::default()
        };
        let p = project_point(&Pose::identity(), &Vec3::new(0.1, 0.0, 1.0), &k500(), &d).unwrap();
        assert!((p.x - 370.05).abs() < 1e-9, "{}", p.x);
        assert!((p.y - 240.0).abs() < 1e-12);
    }

    #[test]
    fn full_distortion_matches_pinned_values() {
        // Reference values evaluated with an independent script.
        let d = DistortionCoeffs {
            k1: -0.21,
            k2: 0.05,
            p1: 0.001,
            p2: -0.0015,
            k3: 0.01,
        };
        let p = project_point(&Pose::identity(), &Vec3::new(0.3, -0.2, 1.5), &k500(), &d).unwrap();
        assert!((p.x - 418.673_550_902_606).abs() < 1e-9, "{}", p.x);
        assert!((p.y - 174.217_632_731_596).abs() < 1e-9, "{}", p.y);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let err = project_point(&Pose::identity(), &Vec3::new(0.0, 0.0, -1.0), &k500(), &DistortionCoeffs::zero());
        assert!(matches!(err, Err(GeometryError::BehindCamera { .. })));
        let err = project_point(&Pose::identity(), &Vec3::new(0.0, 0.0, 1e-10), &k500(), &DistortionCoeffs::zero());
        assert!(err.is_err());
    }

    #[test]
    fn intrinsics_invariants() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 9.9, 0.0, 10, 10).is_ok());
    }

    #[test]
    fn rodrigues_basics() {
        assert_eq!(axis_angle_to_matrix(AxisAngle::new(0.0, 0.0, 0.0)), Mat3::identity());
        let r = axis_angle_to_matrix(AxisAngle::new(0.0, 0.0, PI / 2.0));
        let v = r * Vec3::new(1.0, 0.0, 0.0);
        assert!((v - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn quaternion_basics() {
        let q = matrix_to_quaternion(&Mat3::identity()).unwrap();
        assert_eq!(q.to_array(), [1.0, 0.0, 0.0, 0.0]);
        let r = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        let q = matrix_to_quaternion(&r).unwrap();
        assert!((q.x - 1.0).abs() < 1e-15 && q.w.abs() < 1e-15);
        assert!(matrix_to_quaternion(&(Mat3::identity() * 1.1)).is_err());
        // Reflection: orthogonal but det = -1.
        assert!(matrix_to_quaternion(&Mat3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn axis_angle_at_pi_is_canonical() {
        let r = axis_angle_to_matrix(AxisAngle::new(0.0, -PI, 0.0));
        let aa = matrix_to_axis_angle(&r);
        assert!((aa.0 - Vec3::new(0.0, PI, 0.0)).norm() < 1e-12, "{:?}", aa);
        assert_eq!(AxisAngle::new(0.0, -PI, 0.0).canonical(), AxisAngle::new(0.0, PI, 0.0));
    }

    #[test]
    fn undistort_inverts_distort() {
        let d = DistortionCoeffs {
            k1: -0.3,
            k2: 0.1,
            p1: 0.002,
            p2: -0.001,
            k3: -0.02,
        };
        let n = Vec2::new(0.35, -0.22);
        let back = d.undistort(d.distort(n));
        assert!((back - n).norm() < 1e-13);
    }

    fn arb_vec3(scale: f64) -> impl Strategy<Value = Vec3> {
        (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn axis_angle_round_trip(v in arb_vec3(10.0)) {
            let aa = AxisAngle(v);
            let canonical = aa.canonical();
            prop_assume!((canonical.angle() - PI).abs() > 1e-6);
            let back = matrix_to_axis_angle(&axis_angle_to_matrix(aa));
            prop_assert!((back.0 - canonical.0).amax() < 1e-9, "{:?} vs {:?}", back, canonical);
        }

        #[test]
        fn rotations_are_orthonormal(v in arb_vec3(10.0)) {
            let r = axis_angle_to_matrix(AxisAngle(v));
            prop_assert!(orthonormality_error(&r) < 1e-12);
        }

        #[test]
        fn quaternion_action_matches_matrix(v in arb_vec3(4.0), seed in any::<u64>()) {
            let r = axis_angle_to_matrix(AxisAngle(v));
            let q = matrix_to_quaternion(&r).unwrap();
            prop_assert!((q.norm() - 1.0).abs() < 1e-9);
            prop_assert!(q.w >= 0.0);
            let mut state = seed;
            for _ in 0..100 {
                let mut next = || {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
                };
                let p = Vec3::new(next(), next(), next());
                prop_assert!((q.rotate(&p) - r * p).amax() < 1e-9);
            }
            prop_assert!((q.to_matrix() - r).amax() < 1e-9);
        }

        #[test]
        fn projection_depends_only_on_ray(p in arb_vec3(1.0), lambda in 0.1f64..10.0) {
            let p = Vec3::new(p.x, p.y, p.z.abs() + 0.1);
            let k = k500();
            let d = DistortionCoeffs::zero();
            let a = project_point(&Pose::identity(), &p, &k, &d).unwrap();
            let b = project_point(&Pose::identity(), &(p * lambda), &k, &d).unwrap();
            prop_assert!((a - b).amax() < 1e-9);
        }

        #[test]
        fn zero_distortion_is_pinhole(p in arb_vec3(1.0)) {
            let p = Vec3::new(p.x, p.y, p.z.abs() + 0.1);
            let k = k500();
            let got = project_point(&Pose::identity(), &p, &k, &DistortionCoeffs::zero()).unwrap();
            let want = Vec2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
            prop_assert!((got - want).amax() < 1e-12);
        }
    }
}
