//! Planar pose from four ordered corner correspondences: homography, the two
//! candidate poses it admits, reprojection refinement, and selection.

pub mod homography;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use thiserror::Error;

use crate::geometry::{
    axis_angle_to_matrix, project_camera_point, project_camera_point_with_jacobian,
    rotation_angle_between, skew, undistort_pixel, AxisAngle, CameraIntrinsics,
    DistortionCoeffs, GeometryError, Mat3, Pose, Vec2, Vec3,
};

pub use homography::{estimate_homography, Homography};

pub const MAX_ITERATIONS: u32 = 50;
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Consecutive rejected damped steps before refinement gives up.
pub const MAX_REJECTIONS: u32 = 5;
/// A second candidate within this rms ratio of the best one flags the result ambiguous.
pub const AMBIGUITY_RATIO: f64 = 2.0;
/// The offset correction converges geometrically; three rounds reach 1e-4 px.
const DISK_CORRECTION_ROUNDS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("no candidate pose places the marker in front of the camera")]
    NoValidCandidate,
    #[error("refinement diverged after {iterations} iterations")]
    Divergence { iterations: u32 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Model points on the marker's z = 0 plane paired with image pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    pub model: Vec<Vec2>,
    pub image: Vec<Vec2>,
}

impl Correspondences {
    /// The centered square of edge `size`, ordered TL, TR, BR, BL.
    pub fn square(size: f64, image: [Vec2; 4]) -> Self {
        Self {
            model: square_model(size).to_vec(),
            image: image.to_vec(),
        }
    }
}

pub fn square_model(size: f64) -> [Vec2; 4] {
    let h = size / 2.0;
    [
        Vec2::new(-h, h),
        Vec2::new(h, h),
        Vec2::new(h, -h),
        Vec2::new(-h, -h),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseCandidate {
    pub pose: Pose,
    pub rms_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseResult {
    pub best: PoseCandidate,
    pub ambiguous: bool,
    pub alternate: Option<PoseCandidate>,
}

fn lift(p: &Vec2) -> Vec3 {
    Vec3::new(p.x, p.y, 0.0)
}

/// Root-mean-square pixel distance between projected model points and the image points.
pub fn reprojection_rms(
    pose: &Pose,
    c: &Correspondences,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<f64, GeometryError> {
    Ok((sum_squared_residuals(pose, c, k, d)? / c.model.len() as f64).sqrt())
}

fn sum_squared_residuals(
    pose: &Pose,
    c: &Correspondences,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<f64, GeometryError> {
    let mut sum = 0.0;
    for (m, u) in c.model.iter().zip(&c.image) {
        let p = project_camera_point(&pose.transform(&lift(m)), k, d)?;
        sum += (p - u).norm_squared();
    }
    Ok(sum)
}

fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        let col = -u.column(2);
        u.set_column(2, &col);
        r = u * v_t;
    }
    r
}

/// Decomposes a model-plane-to-pixel homography into the two planar pose
/// candidates. The second is the first with its plane normal mirrored about
/// the line of sight, which leaves the weak-perspective image unchanged.
/// `c.image` must be undistorted pixels; rms errors use the pinhole model.
pub fn poses_from_homography(
    h: &Homography,
    k: &CameraIntrinsics,
    c: &Correspondences,
) -> Result<Vec<PoseCandidate>, PoseError> {
    let m = k.inverse_matrix() * h.matrix();
    let (m1, m2, m3) = (m.column(0), m.column(1), m.column(2));
    let norm = m1.norm() + m2.norm();
    if !(norm > 0.0) {
        return Err(PoseError::Degenerate("homography has no planar part".into()));
    }
    let mut lambda = 2.0 / norm;
    if m3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1: Vec3 = m1 * lambda;
    let r2: Vec3 = m2 * lambda;
    let t: Vec3 = m3 * lambda;
    let r = nearest_rotation(&Mat3::from_columns(&[r1, r2, r1.cross(&r2)]));

    let v = t.normalize();
    let reflect = Mat3::identity() - 2.0 * v * v.transpose();
    let r_alt = Mat3::from_columns(&[
        reflect * r.column(0),
        reflect * r.column(1),
        -(reflect * r.column(2)),
    ]);

    let pinhole = DistortionCoeffs::zero();
    let mut out: Vec<PoseCandidate> = Vec::with_capacity(2);
    for rot in [r, r_alt] {
        if t.z <= 0.0 {
            continue;
        }
        let pose = Pose::new(rot, t);
        let Ok(rms) = reprojection_rms(&pose, c, k, &pinhole) else {
            continue;
        };
        if out
            .iter()
            .any(|o| rotation_angle_between(&o.pose.rotation, &rot) < 1e-9)
        {
            continue;
        }
        out.push(PoseCandidate {
            pose,
            rms_error: rms,
        });
    }
    if out.is_empty() {
        return Err(PoseError::NoValidCandidate);
    }
    Ok(out)
}

/// Stacked 2n×6 Jacobian of pixel residuals with respect to a left-multiplied
/// rotation increment ω and a translation increment, plus the residuals.
pub fn residuals_and_jacobian(
    pose: &Pose,
    c: &Correspondences,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<(DVector<f64>, DMatrix<f64>), GeometryError> {
    let n = c.model.len();
    let mut r = DVector::zeros(2 * n);
    let mut j = DMatrix::zeros(2 * n, 6);
    for (i, (m, u)) in c.model.iter().zip(&c.image).enumerate() {
        let rp = pose.rotation * lift(m);
        let (p, jp) = project_camera_point_with_jacobian(&(rp + pose.translation), k, d)?;
        let res = p - u;
        r[2 * i] = res.x;
        r[2 * i + 1] = res.y;
        let jw = jp * (-skew(&rp));
        j.view_mut((2 * i, 0), (2, 3)).copy_from(&jw);
        j.view_mut((2 * i, 3), (2, 3)).copy_from(&jp);
    }
    Ok((r, j))
}

/// Applies a 6-vector increment: rotation on the left, translation additively.
pub fn apply_increment(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let w = AxisAngle::new(delta[0], delta[1], delta[2]);
    Pose::new(
        axis_angle_to_matrix(w) * pose.rotation,
        pose.translation + Vec3::new(delta[3], delta[4], delta[5]),
    )
}

/// Levenberg-damped Gauss–Newton on the summed squared reprojection error.
/// Only steps that do not increase the cost are taken, so the result never
/// reprojects worse than `initial`.
pub fn refine_pose(
    initial: &PoseCandidate,
    c: &Correspondences,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<PoseCandidate, PoseError> {
    if initial.pose.translation.z <= 0.0 {
        return Err(PoseError::NoValidCandidate);
    }
    let mut pose = initial.pose;
    let mut cost = sum_squared_residuals(&pose, c, k, d)?;
    let mut damping = 1e-3;
    let mut rejections = 0;
    let mut accepted_any = false;
    let n = c.model.len() as f64;

    'outer: for iteration in 0..MAX_ITERATIONS {
        let (r, j) = residuals_and_jacobian(&pose, c, k, d)?;
        let jt = j.transpose();
        let a: Matrix6<f64> = Matrix6::from_iterator((&jt * &j).iter().copied());
        let g: Vector6<f64> = Vector6::from_iterator((&jt * &r).iter().copied());
        loop {
            let mut damped = a;
            for i in 0..6 {
                damped[(i, i)] += damping * a[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-g))) else {
                damping *= 10.0;
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    break 'outer;
                }
                continue;
            };
            if step.norm() < STEP_TOLERANCE {
                break 'outer;
            }
            let candidate = apply_increment(&pose, &step);
            let new_cost = sum_squared_residuals(&candidate, c, k, d).unwrap_or(f64::INFINITY);
            if new_cost <= cost {
                pose = candidate;
                cost = new_cost;
                damping = (damping / 10.0).max(1e-12);
                rejections = 0;
                accepted_any = true;
                continue 'outer;
            }
            damping *= 10.0;
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                if !accepted_any {
                    return Err(PoseError::Divergence {
                        iterations: iteration + 1,
                    });
                }
                break 'outer;
            }
        }
    }
    Ok(PoseCandidate {
        pose,
        rms_error: (cost / n).sqrt(),
    })
}

/// Undistort, fit the homography, refine both candidates against the raw
/// pixels, and keep them ordered by reprojection error.
pub fn solve_planar_pose(
    image_points: &[Vec2; 4],
    marker_size: f64,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<PoseResult, PoseError> {
    if !(marker_size > 0.0) || !marker_size.is_finite() {
        return Err(PoseError::Degenerate(format!(
            "marker size must be positive, got {marker_size}"
        )));
    }
    let raw = Correspondences::square(marker_size, *image_points);
    let ideal = Correspondences {
        model: raw.model.clone(),
        image: raw.image.iter().map(|p| undistort_pixel(*p, k, d)).collect(),
    };
    let h = estimate_homography(&ideal.model, &ideal.image)?;
    let initial = poses_from_homography(&h, k, &ideal)?;

    let mut refined: Vec<PoseCandidate> = Vec::with_capacity(2);
    let mut last_err = None;
    for cand in &initial {
        let seeded = match reprojection_rms(&cand.pose, &raw, k, d) {
            Ok(rms) => PoseCandidate {
                pose: cand.pose,
                rms_error: rms,
            },
            Err(e) => {
                last_err = Some(e.into());
                continue;
            }
        };
        match refine_pose(&seeded, &raw, k, d) {
            // Both refined candidates are kept even when they converge to the
            // same minimum: that is the near-frontal case where the tilt sign
            // is decided by noise.
            Ok(p) if p.pose.translation.z > 0.0 => refined.push(p),
            Ok(_) => last_err = Some(PoseError::NoValidCandidate),
            Err(e) => last_err = Some(e),
        }
    }
    refined.sort_by(|a, b| a.rms_error.total_cmp(&b.rms_error));
    let mut iter = refined.into_iter();
    let best = iter
        .next()
        .ok_or_else(|| last_err.unwrap_or(PoseError::NoValidCandidate))?;
    let alternate = iter.next();
    let ambiguous = alternate.is_some_and(|alt| {
        alt.rms_error == best.rms_error || alt.rms_error < AMBIGUITY_RATIO * best.rms_error
    });
    Ok(PoseResult {
        best,
        ambiguous,
        alternate,
    })
}

/// Pixel offset from the projection of a disk's center to the center of the
/// ellipse the disk images to. The mass centroid of a filled disk sits at the
/// ellipse center, so subtracting this offset recovers the projected center.
/// Lens distortion is ignored: the offset is small and smooth.
pub fn disk_center_offset(
    pose: &Pose,
    center: Vec2,
    radius: f64,
    k: &CameraIntrinsics,
) -> Option<Vec2> {
    let c = pose.rotation * Vec3::new(center.x, center.y, 0.0) + pose.translation;
    if c.z <= 0.0 {
        return None;
    }
    // Disk-plane coordinates (a, b, 1) to normalized image coordinates.
    let plane = Mat3::from_columns(&[pose.rotation.column(0).into(), pose.rotation.column(1).into(), c]);
    let inv = plane.try_inverse()?;
    let circle = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -radius * radius));
    let conic = inv.transpose() * circle * inv;
    let quad = conic.fixed_view::<2, 2>(0, 0).into_owned();
    let linear = conic.fixed_view::<2, 1>(0, 2).into_owned();
    let ellipse_center = quad.try_inverse()? * -linear;
    let projected = Vec2::new(c.x / c.z, c.y / c.z);
    Some(k.normalized_to_pixel(ellipse_center) - k.normalized_to_pixel(projected))
}

/// [`solve_planar_pose`] for corners measured as centroids of disks of
/// `disk_radius` meters. Alternates solving with removing the ellipse-center
/// offsets predicted by the current best pose; a zero radius solves once.
pub fn solve_planar_pose_disks(
    image_points: &[Vec2; 4],
    marker_size: f64,
    disk_radius: f64,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<PoseResult, PoseError> {
    let mut result = solve_planar_pose(image_points, marker_size, k, d)?;
    if disk_radius <= 0.0 {
        return Ok(result);
    }
    let model = square_model(marker_size);
    for _ in 0..DISK_CORRECTION_ROUNDS {
        let mut corrected = *image_points;
        for (p, m) in corrected.iter_mut().zip(&model) {
            *p -= disk_center_offset(&result.best.pose, *m, disk_radius, k)
                .ok_or(PoseError::NoValidCandidate)?;
        }
        result = solve_planar_pose(&corrected, marker_size, k, d)?;
    }
    Ok(result)
}
