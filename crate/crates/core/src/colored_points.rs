//! Colored Points detection: HSV pixel classification, single-pass online
//! clustering into color masses, EMA smoothing of mass centers, and the
//! user-defined topology that turns four masses into ordered square corners.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::imaging::{rgb_to_hsv, Frame, HsvPixel};
use crate::par::{self, Execution};

/// Inclusive HSV box. Hue wraps around when `h_lo > h_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvRange {
    pub h_lo: f64,
    pub h_hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl HsvRange {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let hue_ok = |h: f64| (0.0..=360.0).contains(&h);
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !hue_ok(self.h_lo) || !hue_ok(self.h_hi) {
            out.push("hue bounds must lie in [0, 360]".to_string());
        }
        if ![self.s_lo, self.s_hi, self.v_lo, self.v_hi]
            .into_iter()
            .all(frac_ok)
        {
            out.push("saturation/value bounds must lie in [0, 1]".to_string());
        }
        if self.s_lo > self.s_hi {
            out.push("s_lo must be <= s_hi".to_string());
        }
        if self.v_lo > self.v_hi {
            out.push("v_lo must be <= v_hi".to_string());
        }
        out
    }

    pub fn contains(&self, p: &HsvPixel) -> bool {
        let hue = if self.h_lo <= self.h_hi {
            p.h >= self.h_lo && p.h <= self.h_hi
        } else {
            p.h >= self.h_lo || p.h <= self.h_hi
        };
        hue && p.s >= self.s_lo && p.s <= self.s_hi && p.v >= self.v_lo && p.v <= self.v_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorClass {
    pub id: u32,
    pub name: String,
    pub range: HsvRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

impl BBox {
    pub fn point(x: u32, y: u32) -> Self {
        Self {
            min_x: x,
            min_y: y,
            max_x: x,
            max_y: y,
        }
    }

    /// Euclidean distance from a pixel to the nearest point of the box (0 inside).
    pub fn distance_to(&self, x: u32, y: u32) -> f64 {
        let dx = self.min_x.saturating_sub(x).max(x.saturating_sub(self.max_x)) as f64;
        let dy = self.min_y.saturating_sub(y).max(y.saturating_sub(self.max_y)) as f64;
        dx.hypot(dy)
    }

    pub fn expand(&mut self, x: u32, y: u32) {
        self.min_x = self.min_x.min(x);
        self.min_y = self.min_y.min(y);
        self.max_x = self.max_x.max(x);
        self.max_y = self.max_y.max(y);
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min_x as f64
            && p.x <= self.max_x as f64
            && p.y >= self.min_y as f64
            && p.y <= self.max_y as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorMass {
    pub class_id: u32,
    pub bbox: BBox,
    pub pixel_count: u32,
    pub centroid: Vec2,
    pub smoothed_centroid: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColoredPointsConfig {
    pub dist_cutoff: f64,
    pub min_pixels: u32,
    pub alpha: f64,
    pub match_radius: f64,
}

impl Default for ColoredPointsConfig {
    fn default() -> Self {
        Self {
            dist_cutoff: 32.0,
            min_pixels: 8,
            alpha: 0.7,
            match_radius: 64.0,
        }
    }
}

impl ColoredPointsConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.dist_cutoff.is_finite() && self.dist_cutoff > 0.0) {
            out.push("dist_cutoff must be > 0".to_string());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            out.push("alpha must be in (0, 1]".to_string());
        }
        if !(self.match_radius.is_finite() && self.match_radius >= 0.0) {
            out.push("match_radius must be >= 0".to_string());
        }
        out
    }
}

/// Four color classes arranged as two lines: `lines[0] = (TL, TR)`,
/// `lines[1] = (BL, BR)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTopology {
    pub object_id: u32,
    pub lines: [[u32; 2]; 2],
    pub marker_size: f64,
    /// Radius in meters of the physical disks at the corners. A disk seen at
    /// an angle images to an ellipse whose center is not the projection of
    /// the disk center; a nonzero radius lets the pose solver remove that
    /// offset. Zero treats mass centers as exact corner projections.
    #[serde(default)]
    pub disk_radius: f64,
}

impl ObjectTopology {
    /// Slot classes in TL, TR, BR, BL order.
    pub fn corner_classes(&self) -> [u32; 4] {
        [self.lines[0][0], self.lines[0][1], self.lines[1][1], self.lines[1][0]]
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let slots = self.corner_classes();
        for i in 0..4 {
            for j in i + 1..4 {
                if slots[i] == slots[j] {
                    out.push(format!(
                        "topology {}: the four slots must use distinct classes",
                        self.object_id
                    ));
                    return out;
                }
            }
        }
        if !(self.marker_size.is_finite() && self.marker_size > 0.0) {
            out.push(format!("topology {}: marker_size must be > 0", self.object_id));
        }
        if !(self.disk_radius.is_finite() && self.disk_radius >= 0.0 && self.disk_radius < self.marker_size) {
            out.push(format!(
                "topology {}: disk_radius must be >= 0 and below marker_size",
                self.object_id
            ));
        }
        out
    }
}

const UNCLASSIFIED: u16 = u16::MAX;

/// Index into `classes` of the first range that accepts each pixel.
pub fn classify_pixels(frame: &Frame, classes: &[ColorClass], exec: Execution) -> Vec<u16> {
    let w = frame.width as usize;
    let mut labels = vec![UNCLASSIFIED; w * frame.height as usize];
    par::for_each_row(exec, &mut labels, w, |y, row| {
        let src = &frame.pixels[y * w * 3..(y + 1) * w * 3];
        for (label, px) in row.iter_mut().zip(src.chunks_exact(3)) {
            let hsv = rgb_to_hsv(px[0], px[1], px[2]);
            if let Some(i) = classes.iter().position(|c| c.range.contains(&hsv)) {
                *label = i as u16;
            }
        }
    });
    labels
}

struct Accumulator {
    class_index: usize,
    bbox: BBox,
    count: u32,
    sum_x: u64,
    sum_y: u64,
}

/// Groups classified pixels into color masses in one row-major pass.
///
/// A pixel joins the first same-class mass (in discovery order) whose bounding
/// box lies within `dist_cutoff`; otherwise it starts a new mass. Masses below
/// `min_pixels` are dropped at the end.
pub fn classify_and_cluster(
    frame: &Frame,
    classes: &[ColorClass],
    cfg: &ColoredPointsConfig,
) -> Vec<ColorMass> {
    classify_and_cluster_with(frame, classes, cfg, Execution::default())
}

pub fn classify_and_cluster_with(
    frame: &Frame,
    classes: &[ColorClass],
    cfg: &ColoredPointsConfig,
    exec: Execution,
) -> Vec<ColorMass> {
    if classes.is_empty() {
        return Vec::new();
    }
    let labels = classify_pixels(frame, classes, exec);
    let w = frame.width as usize;
    let mut masses: Vec<Accumulator> = Vec::new();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];

    for (i, &label) in labels.iter().enumerate() {
        if label == UNCLASSIFIED {
            continue;
        }
        let ci = label as usize;
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        let hit = by_class[ci]
            .iter()
            .copied()
            .find(|&m| masses[m].bbox.distance_to(x, y) <= cfg.dist_cutoff);
        match hit {
            Some(m) => {
                let acc = &mut masses[m];
                acc.bbox.expand(x, y);
                acc.count += 1;
                acc.sum_x += x as u64;
                acc.sum_y += y as u64;
            }
            None => {
                by_class[ci].push(masses.len());
                masses.push(Accumulator {
                    class_index: ci,
                    bbox: BBox::point(x, y),
                    count: 1,
                    sum_x: x as u64,
                    sum_y: y as u64,
                });
            }
        }
    }

    masses
        .into_iter()
        .filter(|m| m.count >= cfg.min_pixels)
        .map(|m| {
            let centroid = Vec2::new(
                m.sum_x as f64 / m.count as f64,
                m.sum_y as f64 / m.count as f64,
            );
            ColorMass {
                class_id: classes[m.class_index].id,
                bbox: m.bbox,
                pixel_count: m.count,
                centroid,
                smoothed_centroid: centroid,
            }
        })
        .collect()
}

/// EMA smoothing of mass centers against the previous frame's masses.
///
/// Each current mass is paired with at most one previous mass of the same
/// class within `match_radius`, greedily by ascending distance.
pub fn smooth_masses(
    previous: &[ColorMass],
    current: &[ColorMass],
    cfg: &ColoredPointsConfig,
) -> Vec<ColorMass> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, cur) in current.iter().enumerate() {
        for (pi, prev) in previous.iter().enumerate() {
            if prev.class_id != cur.class_id {
                continue;
            }
            let d = (cur.centroid - prev.smoothed_centroid).norm();
            if d <= cfg.match_radius {
                pairs.push((d, ci, pi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut matched_prev: Vec<Option<usize>> = vec![None; current.len()];
    let mut prev_used = vec![false; previous.len()];
    for (_, ci, pi) in pairs {
        if matched_prev[ci].is_none() && !prev_used[pi] {
            matched_prev[ci] = Some(pi);
            prev_used[pi] = true;
        }
    }

    current
        .iter()
        .zip(matched_prev)
        .map(|(cur, m)| {
            let mut out = cur.clone();
            out.smoothed_centroid = match m {
                Some(pi) => {
                    cur.centroid * cfg.alpha + previous[pi].smoothed_centroid * (1.0 - cfg.alpha)
                }
                None => cur.centroid,
            };
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologyResolution {
    /// Smoothed mass centers in TL, TR, BR, BL order.
    Resolved([Vec2; 4]),
    /// A slot class had zero or several candidate masses.
    Incomplete { class_id: u32, candidates: usize },
}

pub fn resolve_topology(masses: &[ColorMass], topo: &ObjectTopology) -> TopologyResolution {
    let mut corners = [Vec2::zeros(); 4];
    for (slot, class_id) in topo.corner_classes().into_iter().enumerate() {
        let mut found = masses.iter().filter(|m| m.class_id == class_id);
        match (found.next(), found.count()) {
            (Some(m), 0) => corners[slot] = m.smoothed_centroid,
            (first, rest) => {
                return TopologyResolution::Incomplete {
                    class_id,
                    candidates: first.map_or(0, |_| 1 + rest),
                }
            }
        }
    }
    TopologyResolution::Resolved(corners)
}

/// Per-stream detector state: configuration plus the previous frame's masses.
#[derive(Debug, Clone)]
pub struct ColoredPointsTracker {
    pub classes: Vec<ColorClass>,
    pub config: ColoredPointsConfig,
    previous: Vec<ColorMass>,
}

impl ColoredPointsTracker {
    pub fn new(classes: Vec<ColorClass>, config: ColoredPointsConfig) -> Self {
        Self {
            classes,
            config,
            previous: Vec::new(),
        }
    }

    pub fn update(&mut self, frame: &Frame, exec: Execution) -> &[ColorMass] {
        let current = classify_and_cluster_with(frame, &self.classes, &self.config, exec);
        self.previous = smooth_masses(&self.previous, &current, &self.config);
        &self.previous
    }

    pub fn masses(&self) -> &[ColorMass] {
        &self.previous
    }

    pub fn reset(&mut self) {
        self.previous.clear();
    }
}

/// Reference clustering by brute force: same-class pixels closer than
/// `dist_cutoff` are linked, masses are the connected components. Agrees
/// with [`classify_and_cluster`] whenever same-class blobs have bounding
/// boxes more than `2·dist_cutoff` apart and each blob spans at most
/// `dist_cutoff / √2` per axis. Quadratic in the classified pixel count.
pub fn linked_components(frame: &Frame, classes: &[ColorClass], cfg: &ColoredPointsConfig) -> Vec<ColorMass> {
    let labels = classify_pixels(frame, classes, Execution::Sequential);
    let w = frame.width as usize;
    let pixels: Vec<(usize, u16)> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != UNCLASSIFIED)
        .map(|(i, &l)| (i, l))
        .collect();
    let mut parent: Vec<usize> = (0..pixels.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let xy = |i: usize| ((i % w) as f64, (i / w) as f64);
    for a in 0..pixels.len() {
        for b in a + 1..pixels.len() {
            if pixels[a].1 != pixels[b].1 {
                continue;
            }
            let (pa, pb) = (xy(pixels[a].0), xy(pixels[b].0));
            if (pa.0 - pb.0).hypot(pa.1 - pb.1) <= cfg.dist_cutoff {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                // The smaller index stays the root so components keep row-major discovery order.
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for k in 0..pixels.len() {
        let r = root(&mut parent, k);
        match groups.iter_mut().find(|(g, _)| *g == r) {
            Some((_, members)) => members.push(pixels[k].0),
            None => groups.push((r, vec![pixels[k].0])),
        }
    }
    groups.sort_by_key(|(r, _)| pixels[*r].0);
    groups
        .into_iter()
        .filter(|(_, m)| m.len() as u32 >= cfg.min_pixels)
        .map(|(r, members)| {
            let (x0, y0) = xy(members[0]);
            let mut bbox = BBox::point(x0 as u32, y0 as u32);
            let (mut sx, mut sy) = (0.0, 0.0);
            for &i in &members {
                let (x, y) = xy(i);
                bbox.expand(x as u32, y as u32);
                sx += x;
                sy += y;
            }
            let n = members.len() as f64;
            let centroid = Vec2::new(sx / n, sy / n);
            ColorMass {
                class_id: classes[pixels[r].1 as usize].id,
                bbox,
                pixel_count: members.len() as u32,
                centroid,
                smoothed_centroid: centroid,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn red_class() -> ColorClass {
        ColorClass {
            id: 0,
            name: "red".into(),
            range: HsvRange {
                h_lo: 340.0,
                h_hi: 20.0,
                s_lo: 0.5,
                s_hi: 1.0,
                v_lo: 0.3,
                v_hi: 1.0,
            },
        }
    }

    fn fill_rect(f: &mut Frame, x0: u32, y0: u32, w: u32, h: u32, rgb: [u8; 3]) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                f.set_pixel(x, y, rgb);
            }
        }
    }

    fn mass(class_id: u32, c: (f64, f64)) -> ColorMass {
        ColorMass {
            class_id,
            bbox: BBox::point(c.0 as u32, c.1 as u32),
            pixel_count: 10,
            centroid: Vec2::new(c.0, c.1),
            smoothed_centroid: Vec2::new(c.0, c.1),
        }
    }

    #[test]
    fn single_block_centroid() {
        let mut f = Frame::filled(200, 120, [40, 40, 40]);
        fill_rect(&mut f, 50, 50, 10, 10, [255, 0, 0]);
        let masses = classify_and_cluster(&f, &[red_class()], &ColoredPointsConfig::default());
        assert_eq!(masses.len(), 1);
        assert_eq!(masses[0].pixel_count, 100);
        assert_eq!(masses[0].centroid, Vec2::new(54.5, 54.5));
        assert_eq!(masses[0].smoothed_centroid, masses[0].centroid);
    }

    #[test]
    fn gap_against_cutoff() {
        let cfg = ColoredPointsConfig::default();
        let mut far = Frame::filled(260, 40, [40, 40, 40]);
        fill_rect(&mut far, 10, 10, 10, 10, [255, 0, 0]);
        fill_rect(&mut far, 120, 10, 10, 10, [255, 0, 0]);
        assert_eq!(classify_and_cluster(&far, &[red_class()], &cfg).len(), 2);

        let mut near = Frame::filled(260, 40, [40, 40, 40]);
        fill_rect(&mut near, 10, 10, 10, 10, [255, 0, 0]);
        fill_rect(&mut near, 30, 10, 10, 10, [255, 0, 0]);
        let m = classify_and_cluster(&near, &[red_class()], &cfg);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].pixel_count, 200);
        assert_eq!(m[0].bbox, BBox { min_x: 10, min_y: 10, max_x: 39, max_y: 19 });
    }

    #[test]
    fn small_masses_are_dropped() {
        let mut f = Frame::filled(64, 64, [40, 40, 40]);
        fill_rect(&mut f, 5, 5, 2, 3, [255, 0, 0]);
        let m = classify_and_cluster(&f, &[red_class()], &ColoredPointsConfig::default());
        assert!(m.is_empty());
        let cfg = ColoredPointsConfig {
            min_pixels: 6,
            ..Default::default()
        };
        assert_eq!(classify_and_cluster(&f, &[red_class()], &cfg).len(), 1);
    }

    #[test]
    fn hue_wraparound() {
        let r = red_class().range;
        let at = |h| HsvPixel { h, s: 1.0, v: 1.0 };
        let r = HsvRange {
            h_lo: 350.0,
            h_hi: 10.0,
            ..r
        };
        assert!(r.contains(&at(355.0)));
        assert!(r.contains(&at(5.0)));
        assert!(!r.contains(&at(180.0)));
    }

    #[test]
    fn smoothing_without_history_copies_centroid() {
        let cur = vec![mass(0, (3.0, 4.0)), mass(1, (10.0, 1.0))];
        let out = smooth_masses(&[], &cur, &ColoredPointsConfig::default());
        for m in out {
            assert_eq!(m.smoothed_centroid, m.centroid);
        }
    }

    #[test]
    fn smoothing_blends_current_weighted() {
        let prev = vec![mass(0, (10.0, 10.0))];
        let cur = vec![mass(0, (20.0, 20.0))];
        let out = smooth_masses(&prev, &cur, &ColoredPointsConfig::default());
        assert!((out[0].smoothed_centroid - Vec2::new(17.0, 17.0)).norm() < 1e-12);
    }

    #[test]
    fn smoothing_residual_decays_geometrically() {
        let cfg = ColoredPointsConfig::default();
        let target = Vec2::new(100.0, 50.0);
        let e = Vec2::new(8.0, -3.0);
        let mut prev = vec![mass(0, (target.x + e.x, target.y + e.y))];
        for n in 1..=40 {
            prev = smooth_masses(&prev, &[mass(0, (target.x, target.y))], &cfg);
            let residual = prev[0].smoothed_centroid - target;
            let want = e * 0.3f64.powi(n);
            assert!((residual - want).amax() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn smoothing_matches_greedily_within_radius() {
        let cfg = ColoredPointsConfig::default();
        let prev = vec![mass(0, (0.0, 0.0)), mass(0, (100.0, 0.0)), mass(1, (5.0, 0.0))];
        // Two current masses both nearest to prev[0]; the closer one wins it.
        let cur = vec![mass(0, (10.0, 0.0)), mass(0, (2.0, 0.0)), mass(0, (500.0, 0.0))];
        let out = smooth_masses(&prev, &cur, &cfg);
        assert!((out[1].smoothed_centroid.x - 1.4).abs() < 1e-12);
        // cur[0] falls back to prev[1] (distance 90 > 64): unmatched.
        assert_eq!(out[0].smoothed_centroid.x, 10.0);
        assert_eq!(out[2].smoothed_centroid.x, 500.0);
    }

    fn topo() -> ObjectTopology {
        ObjectTopology {
            object_id: 100,
            lines: [[0, 1], [3, 2]],
            marker_size: 0.1,
            disk_radius: 0.0,
        }
    }

    #[test]
    fn topology_orders_corners() {
        let masses = vec![
            mass(2, (90.0, 90.0)),
            mass(0, (10.0, 10.0)),
            mass(3, (10.0, 90.0)),
            mass(1, (90.0, 10.0)),
        ];
        // lines[1] = (BL, BR) = (3, 2).
        match resolve_topology(&masses, &topo()) {
            TopologyResolution::Resolved(c) => {
                assert_eq!(c[0], Vec2::new(10.0, 10.0));
                assert_eq!(c[1], Vec2::new(90.0, 10.0));
                assert_eq!(c[2], Vec2::new(90.0, 90.0));
                assert_eq!(c[3], Vec2::new(10.0, 90.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn topology_refuses_missing_or_duplicate() {
        let masses = vec![mass(0, (10.0, 10.0)), mass(1, (90.0, 10.0)), mass(2, (90.0, 90.0))];
        assert_eq!(
            resolve_topology(&masses, &topo()),
            TopologyResolution::Incomplete { class_id: 3, candidates: 0 }
        );
        let mut dup = masses.clone();
        dup.push(mass(3, (10.0, 90.0)));
        dup.push(mass(1, (50.0, 10.0)));
        assert_eq!(
            resolve_topology(&dup, &topo()),
            TopologyResolution::Incomplete { class_id: 1, candidates: 2 }
        );
    }

    #[test]
    fn config_and_topology_validation() {
        assert!(ColoredPointsConfig::default().violations().is_empty());
        let bad = ColoredPointsConfig {
            alpha: 1.5,
            dist_cutoff: 0.0,
            ..Default::default()
        };
        let v = bad.violations();
        assert!(v.iter().any(|m| m.contains("alpha")));
        assert!(v.iter().any(|m| m.contains("dist_cutoff")));
        let mut t = topo();
        t.lines = [[0, 1], [1, 2]];
        assert!(!t.violations().is_empty());
    }

    fn random_frame(seed: u64, w: u32, h: u32) -> Frame {
        let mut s = seed;
        let mut f = Frame::filled(w, h, [0; 3]);
        let palette = [[255, 0, 0], [0, 200, 0], [30, 30, 30], [250, 20, 10], [0, 0, 255]];
        for y in 0..h {
            for x in 0..w {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f.set_pixel(x, y, palette[(s >> 60) as usize % palette.len()]);
            }
        }
        f
    }

    proptest! {
        #[test]
        fn clustering_partitions_classified_pixels(seed in any::<u64>(), cutoff in 1.0f64..6.0, min_px in 1u32..5) {
            let f = random_frame(seed, 24, 18);
            let classes = vec![red_class(), ColorClass {
                id: 7,
                name: "green".into(),
                range: HsvRange { h_lo: 90.0, h_hi: 150.0, s_lo: 0.5, s_hi: 1.0, v_lo: 0.3, v_hi: 1.0 },
            }];
            let keep_all = ColoredPointsConfig { dist_cutoff: cutoff, min_pixels: 1, ..Default::default() };
            let all = classify_and_cluster(&f, &classes, &keep_all);
            let labels = classify_pixels(&f, &classes, Execution::Sequential);
            for (ci, class) in classes.iter().enumerate() {
                let matching = labels.iter().filter(|&&l| l as usize == ci).count() as u32;
                let total: u32 = all.iter().filter(|m| m.class_id == class.id).map(|m| m.pixel_count).sum();
                prop_assert_eq!(total, matching);
            }
            let cfg = ColoredPointsConfig { min_pixels: min_px, ..keep_all };
            let kept = classify_and_cluster(&f, &classes, &cfg);
            let expected: Vec<_> = all.iter().filter(|m| m.pixel_count >= min_px).cloned().collect();
            prop_assert_eq!(&kept, &expected);
            for m in &kept {
                prop_assert!(m.bbox.contains(m.centroid));
            }
            // Determinism across execution policies.
            prop_assert_eq!(classify_and_cluster_with(&f, &classes, &cfg, Execution::Parallel), kept);
        }

        #[test]
        fn smoothed_center_is_convex_combination(px in -500.0f64..500.0, py in -500.0f64..500.0,
                                                  cx in -500.0f64..500.0, cy in -500.0f64..500.0,
                                                  alpha in 0.01f64..=1.0) {
            let cfg = ColoredPointsConfig { alpha, match_radius: 2000.0, ..Default::default() };
            let out = smooth_masses(&[mass(0, (px, py))], &[mass(0, (cx, cy))], &cfg);
            let s = out[0].smoothed_centroid;
            prop_assert!(s.x >= px.min(cx) - 1e-9 && s.x <= px.max(cx) + 1e-9);
            prop_assert!(s.y >= py.min(cy) - 1e-9 && s.y <= py.max(cy) + 1e-9);
        }
    }
}
