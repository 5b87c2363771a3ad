//! Whole-pattern corner refinement for decoded markers.
//!
//! Every 4-neighbor pixel pair that straddles a dark/light boundary of the
//! known cell pattern says the boundary passes between the two pixel
//! centers. With the image-to-grid homography `G` and homogeneous pixel `p`,
//! "pixel maps to the left of grid line x = k" is `k·G₃·p - G₁·p > 0`, linear
//! in `G`. The constraints from all cell edges together pin `G` far tighter
//! than the outer border alone, whose aliasing leaves the angle of edges near
//! 0° or 45° poorly determined. The estimate is the analytic center of the
//! feasible set, which tracked the truth better than the largest-margin
//! point on synthetic round trips.

use nalgebra::{SMatrix, SVector};

use crate::geometry::{Mat3, Vec2, Vec3};
use crate::imaging::GrayFrame;
use crate::pose::Homography;

type Vec9 = SVector<f64, 9>;
type Mat9 = SMatrix<f64, 9, 9>;

/// Pairs closer than this many pixels to a second grid line are skipped.
const VERTEX_CLEARANCE: f64 = 2.0;
/// Refined corners may not move further than this from the input. Edge-fit
/// corners are within half a pixel except on edges a few degrees off an
/// image axis, where they can be close to a pixel out.
const MAX_SHIFT: f64 = 1.5;
const NEWTON_STEPS: usize = 50;
const FEASIBILITY_ROUNDS: usize = 40;

/// Constraint `a[..8]·g + a[8] > 0` on the first eight entries of `G`, with `G₃₃ = 1`.
struct Constraints {
    rows: Vec<Vec9>,
}

impl Constraints {
    /// Slacks of every constraint relaxed by `t`, if all are positive.
    fn slacks(&self, g: &SVector<f64, 8>, t: f64) -> Option<Vec<f64>> {
        let s: Vec<f64> = self
            .rows
            .iter()
            .map(|a| a.fixed_rows::<8>(0).dot(g) + a[8] + t)
            .collect();
        s.iter().all(|&v| v > 0.0).then_some(s)
    }

    /// Barrier objective `weight·t - Σ log(slack)`; with no weight `t` is held fixed.
    fn cost(&self, g: &SVector<f64, 8>, t: f64, weight: Option<f64>) -> Option<f64> {
        let s = self.slacks(g, t)?;
        Some(weight.map_or(0.0, |w| w * t) - s.iter().map(|v| v.ln()).sum::<f64>())
    }

    /// Damped Newton on the barrier objective. Every iterate keeps all
    /// slacks positive. Stops early once `t` turns negative if `until_feasible`.
    fn minimize(
        &self,
        mut g: SVector<f64, 8>,
        mut t: f64,
        weight: Option<f64>,
        until_feasible: bool,
    ) -> Option<(SVector<f64, 8>, f64)> {
        for _ in 0..NEWTON_STEPS {
            let s = self.slacks(&g, t)?;
            let mut grad = Vec9::zeros();
            let mut hess = Mat9::zeros();
            for (a, &si) in self.rows.iter().zip(&s) {
                let mut b = *a;
                b[8] = if weight.is_some() { 1.0 } else { 0.0 };
                grad -= b / si;
                hess += b * b.transpose() / (si * si);
            }
            match weight {
                Some(w) => grad[8] += w,
                None => hess[(8, 8)] = 1.0,
            }
            let step = hess.cholesky()?.solve(&(-grad));
            let cost = self.cost(&g, t, weight)?;
            let dg = step.fixed_rows::<8>(0).into_owned();
            let mut alpha = 1.0;
            while !self
                .cost(&(g + dg * alpha), t + step[8] * alpha, weight)
                .is_some_and(|c| c <= cost)
            {
                alpha *= 0.5;
                if alpha < 1e-12 {
                    return Some((g, t));
                }
            }
            g += dg * alpha;
            t += step[8] * alpha;
            if (until_feasible && t < 0.0) || -grad.dot(&step) < 1e-12 {
                break;
            }
        }
        Some((g, t))
    }
}

/// Refines the grid-to-image homography `h` of a decoded marker. `dark(r, c)`
/// gives the expected color of cell `(r, c)` of the `cells × cells` grid in
/// the frame of `h`; everything outside the grid is expected light. Pixels
/// at or below `threshold` are dark. Returns `None` when the pixel data is
/// not consistent with any homography near `h`.
pub fn refine_homography(
    gray: &GrayFrame,
    threshold: f64,
    h: &Homography,
    cells: usize,
    dark: impl Fn(i64, i64) -> bool,
) -> Option<Homography> {
    let side = cells as f64;
    let corners = [(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)]
        .map(|(x, y)| h.apply(Vec2::new(x, y)));
    let lo = corners.iter().fold(Vec2::repeat(f64::MAX), |m, c| m.inf(c)) - Vec2::repeat(3.0);
    let hi = corners.iter().fold(Vec2::repeat(f64::MIN), |m, c| m.sup(c)) + Vec2::repeat(3.0);
    let x0 = lo.x.floor().max(0.0) as i64;
    let y0 = lo.y.floor().max(0.0) as i64;
    let x1 = (hi.x.ceil() as i64).min(gray.width as i64 - 1);
    let y1 = (hi.y.ceil() as i64).min(gray.height as i64 - 1);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }

    // Pixel coordinates are centered and scaled for conditioning.
    let center = (lo + hi) / 2.0;
    let scale = ((hi - lo).max() / 2.0).max(1.0);
    let to_unit = Mat3::new(1.0 / scale, 0.0, -center.x / scale, 0.0, 1.0 / scale, -center.y / scale, 0.0, 0.0, 1.0);
    let g0 = h.matrix().try_inverse()? * to_unit.try_inverse()?;
    if g0[(2, 2)].abs() < 1e-12 {
        return None;
    }
    let g0 = g0 / g0[(2, 2)];
    let map = |p: &Vec3| {
        let q = g0 * p;
        Vec2::new(q.x / q.z, q.y / q.z)
    };
    let color = |r: i64, c: i64| {
        let inside = (0..cells as i64).contains(&r) && (0..cells as i64).contains(&c);
        inside && dark(r, c)
    };

    let is_dark = |x: i64, y: i64| (gray.get(x as u32, y as u32) as f64) <= threshold;
    let unit = |x: i64, y: i64| to_unit * Vec3::new(x as f64, y as f64, 1.0);
    let mut rows = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx > x1 || ny > y1 || is_dark(x, y) == is_dark(nx, ny) {
                    continue;
                }
                let (d, l) = if is_dark(x, y) {
                    (unit(x, y), unit(nx, ny))
                } else {
                    (unit(nx, ny), unit(x, y))
                };
                let (gd, gl) = (map(&d), map(&l));
                let px = (gl - gd).norm();
                let m = (gd + gl) / 2.0;
                let near = |v: f64| (v - v.round()).abs() < VERTEX_CLEARANCE * px;
                // axis 0: crossing a line x = k, axis 1: a line y = k.
                let axis = match (near(m.x), near(m.y)) {
                    (true, false) => 0,
                    (false, true) => 1,
                    _ => continue,
                };
                let (along, across) = if axis == 0 { (m.y, m.x) } else { (m.x, m.y) };
                let k = across.round();
                let dir = if axis == 0 { gl.x - gd.x } else { gl.y - gd.y };
                if dir == 0.0 {
                    continue;
                }
                let sigma = dir.signum();
                let line = along.floor() as i64;
                let before = k as i64 - 1;
                let after = k as i64;
                let (dark_cell, light_cell) = if sigma > 0.0 { (before, after) } else { (after, before) };
                let cell = |i: i64| if axis == 0 { color(line, i) } else { color(i, line) };
                if !cell(dark_cell) || cell(light_cell) {
                    continue;
                }
                // Dark pixel: sigma·(k·G₃ - Gₐ)·d > 0. Light pixel: sigma·(Gₐ - k·G₃)·l > 0.
                for (p, sign) in [(d, sigma), (l, -sigma)] {
                    let mut a = Vec9::zeros();
                    for j in 0..3 {
                        a[axis * 3 + j] = -sign * p[j];
                        a[6 + j] = sign * k * p[j];
                    }
                    rows.push(a);
                }
            }
        }
    }
    if rows.len() < 16 {
        return None;
    }
    let cons = Constraints { rows };

    let mut g = SVector::<f64, 8>::from_iterator(g0.transpose().iter().take(8).copied());
    let min_slack = cons
        .rows
        .iter()
        .map(|a| a.fixed_rows::<8>(0).dot(&g) + a[8])
        .fold(f64::MAX, f64::min);
    if min_slack <= 0.0 {
        // Find a strictly feasible start: minimize t with every slack + t > 0.
        let mut t = -min_slack * 1.5 + 1e-6;
        let mut weight = 1.0 / t;
        for _ in 0..FEASIBILITY_ROUNDS {
            (g, t) = cons.minimize(g, t, Some(weight), true)?;
            if t < 0.0 {
                break;
            }
            weight *= 4.0;
        }
        if t >= 0.0 {
            return None;
        }
    }
    let (g, _) = cons.minimize(g, 0.0, None, false)?;

    let gm = Mat3::new(g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], 1.0);
    let refined = Homography::from_matrix(to_unit.try_inverse()? * gm.try_inverse()?).ok()?;
    let moved = [(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)]
        .iter()
        .zip(&corners)
        .all(|(&(x, y), c)| (refined.apply(Vec2::new(x, y)) - c).norm() < MAX_SHIFT);
    moved.then_some(refined)
}
