//! Quadrilateral extraction from a dark-pixel mask: outer-border tracing,
//! polygon simplification, and a least-squares line fit of each side.

use crate::geometry::Vec2;
use crate::imaging::BinaryMask;

/// Four corners with positive shoelace area in raw image coordinates
/// (counter-clockwise with y pointing down, which reads clockwise on screen).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub corners: [Vec2; 4],
}

impl Quad {
    pub fn signed_area(&self) -> f64 {
        polygon_signed_area(&self.corners)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_convex(&self) -> bool {
        is_convex(&self.corners)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let c = &self.corners;
        let sign = self.signed_area().signum();
        (0..4).all(|i| {
            let a = c[i];
            let b = c[(i + 1) % 4];
            sign * cross(b - a, p - a) >= 0.0
        })
    }

    pub fn centroid(&self) -> Vec2 {
        self.corners.iter().sum::<Vec2>() / 4.0
    }

    /// Reorders corners to positive orientation starting from the corner
    /// with the smallest `x + y`.
    pub fn canonicalized(mut self) -> Quad {
        if self.signed_area() < 0.0 {
            self.corners.swap(1, 3);
        }
        let start = (0..4)
            .min_by(|&a, &b| {
                let (pa, pb) = (self.corners[a], self.corners[b]);
                (pa.x + pa.y)
                    .total_cmp(&(pb.x + pb.y))
                    .then(pa.y.total_cmp(&pb.y))
            })
            .unwrap_or(0);
        self.corners.rotate_left(start);
        self
    }
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn polygon_signed_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| cross(pts[i], pts[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

fn is_convex(pts: &[Vec2]) -> bool {
    let n = pts.len();
    let mut sign = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let c = pts[(i + 2) % n];
        let z = cross(b - a, c - b);
        if z.abs() < 1e-12 {
            return false;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadParams {
    pub min_area: f64,
    /// Polygon simplification tolerance as a fraction of the contour perimeter.
    pub approx_fraction: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            min_area: 100.0,
            approx_fraction: 0.03,
        }
    }
}

// Screen-clockwise neighbor ring: E, SE, S, SW, W, NW, N, NE.
const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

struct Component {
    label: u32,
    start: (i64, i64),
    min: (i64, i64),
    max: (i64, i64),
}

/// 8-connected labeling of set pixels. Labels start at 1; 0 is unset.
fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<Component>) {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut labels = vec![0u32; mask.bits.len()];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if !mask.bits[i] || labels[i] != 0 {
                continue;
            }
            let label = comps.len() as u32 + 1;
            let mut comp = Component {
                label,
                start: (x, y),
                min: (x, y),
                max: (x, y),
            };
            labels[i] = label;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                comp.min = (comp.min.0.min(cx), comp.min.1.min(cy));
                comp.max = (comp.max.0.max(cx), comp.max.1.max(cy));
                for (dx, dy) in DIRS {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if mask.bits[j] && labels[j] == 0 {
                        labels[j] = label;
                        stack.push((nx, ny));
                    }
                }
            }
            comps.push(comp);
        }
    }
    (labels, comps)
}

/// Moore-neighbor trace of a component's outer border, starting from its first
/// pixel in raster order. The border runs screen-clockwise.
fn trace_outer_border(labels: &[u32], w: i64, h: i64, comp: &Component) -> Vec<(i64, i64)> {
    let inside = |p: (i64, i64)| {
        p.0 >= 0 && p.1 >= 0 && p.0 < w && p.1 < h && labels[(p.1 * w + p.0) as usize] == comp.label
    };
    let start = comp.start;
    let mut contour = vec![start];
    let mut p = start;
    // The raster-first pixel always has background to its west.
    let mut back = 4usize;
    let limit = 4 * ((comp.max.0 - comp.min.0 + 1) * (comp.max.1 - comp.min.1 + 1)) as usize + 8;
    for _ in 0..limit {
        let next = (1..=8).map(|k| (back + k) % 8).find_map(|d| {
            let q = (p.0 + DIRS[d].0, p.1 + DIRS[d].1);
            inside(q).then_some((d, q))
        });
        let Some((d, q)) = next else {
            break;
        };
        back = if d % 2 == 0 { (d + 6) % 8 } else { (d + 5) % 8 };
        if p == start && contour.len() > 1 && q == contour[1] {
            break;
        }
        p = q;
        if p != start {
            contour.push(p);
        }
    }
    contour
}

fn point_line_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len = ab.norm();
    if len < 1e-12 {
        return (p - a).norm();
    }
    cross(ab, p - a).abs() / len
}

fn douglas_peucker(pts: &[Vec2], first: usize, last: usize, eps: f64, keep: &mut Vec<usize>) {
    if last <= first + 1 {
        return;
    }
    let (a, b) = (pts[first], pts[last % pts.len()]);
    let mut best = (0.0, first);
    for i in first + 1..last {
        let d = point_line_distance(pts[i % pts.len()], a, b);
        if d > best.0 {
            best = (d, i);
        }
    }
    if best.0 > eps {
        douglas_peucker(pts, first, best.1, eps, keep);
        keep.push(best.1 % pts.len());
        douglas_peucker(pts, best.1, last, eps, keep);
    }
}

/// Closed-contour simplification. The contour is split at two mutually far
/// points, which for a convex shape are both true vertices; each half is
/// simplified, then any vertex within `eps` of the chord joining its
/// neighbors is dropped.
fn approx_polygon(contour: &[Vec2], eps: f64) -> Vec<Vec2> {
    let n = contour.len();
    if n < 3 {
        return contour.to_vec();
    }
    let farthest_from = |from: Vec2| {
        (0..n)
            .max_by(|&a, &b| {
                (contour[a] - from)
                    .norm_squared()
                    .total_cmp(&(contour[b] - from).norm_squared())
            })
            .unwrap_or(0)
    };
    let a = farthest_from(contour[0]);
    let b = farthest_from(contour[a]);
    let rotated: Vec<Vec2> = contour[a..].iter().chain(&contour[..a]).copied().collect();
    let far = (b + n - a) % n;
    let contour = &rotated[..];
    if far == 0 {
        return contour.to_vec();
    }
    let mut keep = vec![0];
    douglas_peucker(contour, 0, far, eps, &mut keep);
    keep.push(far);
    douglas_peucker(contour, far, n, eps, &mut keep);
    let mut poly: Vec<Vec2> = keep.into_iter().map(|i| contour[i]).collect();
    loop {
        let m = poly.len();
        if m <= 3 {
            break;
        }
        let weakest = (0..m)
            .map(|i| {
                let d = point_line_distance(poly[i], poly[(i + m - 1) % m], poly[(i + 1) % m]);
                (d, i)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match weakest {
            Some((d, i)) if d <= eps => {
                poly.remove(i);
            }
            _ => break,
        }
    }
    poly
}

/// Weighted total least squares line: (point on line, unit direction).
fn fit_line_weighted(points: &[(Vec2, f64)]) -> Option<(Vec2, Vec2)> {
    let total: f64 = points.iter().map(|(_, w)| w).sum();
    if points.len() < 3 || !(total > 0.0) {
        return None;
    }
    let mean = points.iter().map(|(p, w)| p * *w).sum::<Vec2>() / total;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, w) in points {
        let d = p - mean;
        sxx += w * d.x * d.x;
        sxy += w * d.x * d.y;
        syy += w * d.y * d.y;
    }
    // Principal axis of the 2x2 scatter matrix.
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((mean, Vec2::new(angle.cos(), angle.sin())))
}

/// Fits an edge line to the dark/light pixel pairs straddling it. Each pair
/// only says the edge passes between the two pixel centers, so the estimate
/// is the widest-margin line separating all dark centers from all light
/// ones. On aliased edges this beats fitting midpoints, whose errors do not
/// average out when the edge slope is close to a simple ratio. Falls back
/// to a least squares fit of the midpoints when no separating line exists.
fn fit_edge(points: &[(Vec2, Vec2)]) -> Option<(Vec2, Vec2)> {
    let weighted: Vec<(Vec2, f64)> = points.iter().map(|(p, _)| (*p, 1.0)).collect();
    let initial = fit_line_weighted(&weighted)?;
    let origin = initial.0;
    let dark: Vec<Vec2> = points.iter().map(|(p, s)| p - s * 0.5 - origin).collect();
    let light: Vec<Vec2> = points.iter().map(|(p, s)| p + s * 0.5 - origin).collect();
    let outward = points.iter().map(|(_, s)| *s).sum::<Vec2>();
    let mut phi0 = initial.1.y.atan2(initial.1.x) - std::f64::consts::FRAC_PI_2;
    if Vec2::new(phi0.cos(), phi0.sin()).dot(&outward) < 0.0 {
        phi0 += std::f64::consts::PI;
    }
    // Feasible offsets along normal angle phi: dark centers below, light above.
    let gap = |phi: f64| {
        let n = Vec2::new(phi.cos(), phi.sin());
        let lo = dark.iter().map(|d| n.dot(d)).fold(f64::MIN, f64::max);
        let hi = light.iter().map(|l| n.dot(l)).fold(f64::MAX, f64::min);
        (hi - lo, 0.5 * (hi + lo))
    };
    let (mut a, mut b) = (phi0 - 0.05, phi0 + 0.05);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = b - ratio * (b - a);
        let m2 = a + ratio * (b - a);
        if gap(m1).0 < gap(m2).0 {
            a = m1;
        } else {
            b = m2;
        }
    }
    let phi = 0.5 * (a + b);
    let (width, offset) = gap(phi);
    if width <= 0.0 {
        return Some(initial);
    }
    let n = Vec2::new(phi.cos(), phi.sin());
    Some((origin + n * offset, Vec2::new(-n.y, n.x)))
}

fn intersect(l1: (Vec2, Vec2), l2: (Vec2, Vec2)) -> Option<Vec2> {
    let denom = cross(l1.1, l2.1);
    if denom.abs() < 1e-9 {
        return None;
    }
    let t = cross(l2.0 - l1.0, l2.1) / denom;
    Some(l1.0 + l1.1 * t)
}

/// Moves polygon corners onto the intersections of lines fitted to the
/// dark/light transitions along each side. Transition points sit halfway
/// between a border pixel and its light 4-neighbor.
fn refine_corners(mask: &BinaryMask, border: &[(i64, i64)], corners: [Vec2; 4]) -> [Vec2; 4] {
    let mut edge_points: Vec<(Vec2, Vec2)> = Vec::new();
    for &(x, y) in border {
        for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            if !mask.get_or_false(x + dx, y + dy) {
                edge_points.push((
                    Vec2::new(x as f64 + 0.5 * dx as f64, y as f64 + 0.5 * dy as f64),
                    Vec2::new(dx as f64, dy as f64),
                ));
            }
        }
    }
    edge_points.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
    edge_points.dedup_by(|a, b| a.0 == b.0);

    let center = corners.iter().sum::<Vec2>() / 4.0;
    let mut lines = Vec::with_capacity(4);
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let side = b - a;
        let len = side.norm();
        let dir = side / len;
        let mut normal = Vec2::new(-dir.y, dir.x);
        if normal.dot(&(a - center)) < 0.0 {
            normal = -normal;
        }
        let margin = (0.1 * len).max(2.0);
        let pts: Vec<(Vec2, Vec2)> = edge_points
            .iter()
            .filter(|(p, step)| {
                let t = (p - a).dot(&dir);
                step.dot(&normal) > 0.0
                    && t > margin
                    && t < len - margin
                    && point_line_distance(*p, a, b) < 3.0
            })
            .copied()
            .collect();
        match fit_edge(&pts) {
            Some(line) => lines.push(line),
            None => return corners,
        }
    }
    let mut refined = corners;
    for i in 0..4 {
        match intersect(lines[(i + 3) % 4], lines[i]) {
            Some(p) if (p - corners[i]).norm() < 3.0 => refined[i] = p,
            _ => return corners,
        }
    }
    refined
}

pub fn extract_quads(mask: &BinaryMask) -> Vec<Quad> {
    extract_quads_with(mask, &QuadParams::default())
}

/// Convex four-sided outer borders of dark regions, largest first. Regions
/// touching the image border are skipped, as are quads nested inside a larger one.
pub fn extract_quads_with(mask: &BinaryMask, params: &QuadParams) -> Vec<Quad> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let (labels, comps) = label_components(mask);
    let mut quads = Vec::new();
    for comp in &comps {
        let (bw, bh) = (comp.max.0 - comp.min.0 + 1, comp.max.1 - comp.min.1 + 1);
        if ((bw * bh) as f64) < params.min_area {
            continue;
        }
        if comp.min.0 == 0 || comp.min.1 == 0 || comp.max.0 == w - 1 || comp.max.1 == h - 1 {
            continue;
        }
        let border = trace_outer_border(&labels, w, h, comp);
        if border.len() < 8 {
            continue;
        }
        let pts: Vec<Vec2> = border
            .iter()
            .map(|&(x, y)| Vec2::new(x as f64, y as f64))
            .collect();
        let perimeter: f64 = (0..pts.len())
            .map(|i| (pts[(i + 1) % pts.len()] - pts[i]).norm())
            .sum();
        let poly = approx_polygon(&pts, params.approx_fraction * perimeter);
        if poly.len() != 4 {
            continue;
        }
        let coarse = Quad {
            corners: [poly[0], poly[1], poly[2], poly[3]],
        };
        if !coarse.is_convex() || coarse.area() < params.min_area {
            continue;
        }
        let quad = Quad {
            corners: refine_corners(mask, &border, coarse.corners),
        };
        if !quad.is_convex() || quad.area() < params.min_area {
            continue;
        }
        quads.push(quad.canonicalized());
    }
    quads.sort_by(|a, b| b.area().total_cmp(&a.area()));
    let mut kept: Vec<Quad> = Vec::new();
    for q in quads {
        if !kept.iter().any(|k| q.corners.iter().all(|&c| k.contains(c))) {
            kept.push(q);
        }
    }
    kept
}
