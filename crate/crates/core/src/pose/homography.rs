use nalgebra::{DMatrix, Matrix3};

use crate::geometry::{Mat3, Vec2};

use super::PoseError;

/// Collinearity tolerance on Hartley-normalized coordinates.
const COLLINEAR_EPS: f64 = 1e-9;

/// Plane-to-image projective map, scaled to unit Frobenius norm with `h33 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Mat3);

impl Homography {
    pub fn from_matrix(m: Mat3) -> Result<Self, PoseError> {
        let norm = m.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(PoseError::Degenerate("homography has zero norm".into()));
        }
        let mut h = m / norm;
        if h[(2, 2)] < 0.0 {
            h = -h;
        }
        if h.determinant().abs() <= 1e-12 {
            return Err(PoseError::Degenerate("homography is rank deficient".into()));
        }
        Ok(Self(h))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        let v = self.0 * p.push(1.0);
        Vec2::new(v.x / v.z, v.y / v.z)
    }
}

/// Similarity taking the points' centroid to the origin and their mean
/// distance from it to √2.
fn hartley(points: &[Vec2]) -> Result<Mat3, PoseError> {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vec2>() / n;
    let mean = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(PoseError::Degenerate("points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

fn transform_all(t: &Mat3, points: &[Vec2]) -> Vec<Vec2> {
    points
        .iter()
        .map(|p| {
            let v = t * p.push(1.0);
            Vec2::new(v.x / v.z, v.y / v.z)
        })
        .collect()
}

fn has_collinear_triple(points: &[Vec2]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let cross = (b - a).perp(&(c - a));
                if cross.abs() < COLLINEAR_EPS {
                    return true;
                }
            }
        }
    }
    false
}

/// Normalized DLT for `dst ≈ H·src`. Needs at least four pairs with no three
/// points collinear in either set.
pub fn estimate_homography(src: &[Vec2], dst: &[Vec2]) -> Result<Homography, PoseError> {
    if src.len() != dst.len() || src.len() < 4 {
        return Err(PoseError::Degenerate(format!(
            "need at least 4 matched points, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    if src.iter().chain(dst).any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(PoseError::Degenerate("non-finite point".into()));
    }
    let ts = hartley(src)?;
    let td = hartley(dst)?;
    let s = transform_all(&ts, src);
    let d = transform_all(&td, dst);
    if has_collinear_triple(&s) || has_collinear_triple(&d) {
        return Err(PoseError::Degenerate("three points are collinear".into()));
    }

    // The SVD needs at least as many rows as columns to expose the null vector.
    let rows = (2 * s.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in s.iter().zip(&d).enumerate() {
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[
            -p.x, -p.y, -1.0, 0.0, 0.0, 0.0, q.x * p.x, q.x * p.y, q.x,
        ]);
        a.row_mut(r + 1).copy_from_slice(&[
            0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y,
        ]);
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| PoseError::Degenerate("SVD failed".into()))?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| PoseError::Degenerate("SVD failed".into()))?;
    let h = v_t.row(idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| PoseError::Degenerate("normalization is singular".into()))?;
    Homography::from_matrix(td_inv * hn * ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Vec2> {
        vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn identity_map() {
        let h = estimate_homography(&square(), &square()).unwrap();
        let want = Mat3::identity() / 3f64.sqrt();
        assert!((h.0 - want).amax() < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let dst: Vec<Vec2> = square().iter().map(|p| p + Vec2::new(10.0, 5.0)).collect();
        let h = estimate_homography(&square(), &dst).unwrap();
        let m = h.0 / h.0[(2, 2)];
        let want = Matrix3::new(1.0, 0.0, 10.0, 0.0, 1.0, 5.0, 0.0, 0.0, 1.0);
        assert!((m - want).amax() < 1e-10);
        for (p, q) in square().iter().zip(&dst) {
            assert!((h.apply(*p) - q).norm() < 1e-10);
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let dst = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 5.0),
        ];
        assert!(matches!(
            estimate_homography(&square(), &dst),
            Err(PoseError::Degenerate(_))
        ));
    }

    #[test]
    fn rank_deficient_matrix_is_rejected() {
        let m = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0);
        assert!(Homography::from_matrix(m).is_err());
    }
}
