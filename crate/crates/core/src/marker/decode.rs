use crate::geometry::Vec2;
use crate::imaging::GrayFrame;
use crate::pose::estimate_homography;

use super::binarize::otsu_threshold;
use super::dictionary::{hamming, rotations, MarkerDictionary};
use super::quads::Quad;
use super::refine::refine_homography;
use super::{DetectedMarker, NoMatchReason};

/// Samples per cell side, spread over the central half of the cell.
const SAMPLES: usize = 3;
/// Cell means spanning less than this many gray levels carry no pattern.
const MIN_CONTRAST: f64 = 30.0;

fn sample_offsets() -> [f64; SAMPLES] {
    std::array::from_fn(|i| 0.25 + 0.5 * (i as f64 + 0.5) / SAMPLES as f64)
}

fn nearest(gray: &GrayFrame, p: Vec2) -> Option<u8> {
    let (x, y) = (p.x.round(), p.y.round());
    if x < 0.0 || y < 0.0 || x >= gray.width as f64 || y >= gray.height as f64 {
        return None;
    }
    Some(gray.get(x as u32, y as u32))
}

/// Gray level halfway between the mean light and mean dark cell.
fn midpoint(sums: [f64; 2], counts: [usize; 2]) -> f64 {
    let light = sums[0] / counts[0].max(1) as f64;
    let dark = sums[1] / counts[1].max(1) as f64;
    if counts[0] == 0 {
        return dark + MIN_CONTRAST / 2.0;
    }
    (light + dark) / 2.0
}

/// Reads the `(n+2)²` cell grid inside `quad` and matches its inner bits
/// against every code in every rotation.
///
/// `quad.corners[0]` maps to the grid's top-left. When the observed pattern
/// equals the code turned `k` quarter turns clockwise, the marker's own
/// top-left corner is `quad.corners[k]`.
pub fn decode(
    gray: &GrayFrame,
    quad: &Quad,
    dict: &MarkerDictionary,
) -> Result<DetectedMarker, NoMatchReason> {
    let n = dict.grid_n as usize;
    let cells = n + 2;
    let side = cells as f64;
    let grid = [
        Vec2::new(0.0, 0.0),
        Vec2::new(side, 0.0),
        Vec2::new(side, side),
        Vec2::new(0.0, side),
    ];
    let h = estimate_homography(&grid, &quad.corners).map_err(|_| NoMatchReason::Degenerate)?;

    let offsets = sample_offsets();
    let mut samples = vec![[0u8; SAMPLES * SAMPLES]; cells * cells];
    for r in 0..cells {
        for c in 0..cells {
            let cell = &mut samples[r * cells + c];
            for (i, dy) in offsets.iter().enumerate() {
                for (j, dx) in offsets.iter().enumerate() {
                    let p = h.apply(Vec2::new(c as f64 + dx, r as f64 + dy));
                    cell[i * SAMPLES + j] = nearest(gray, p).ok_or(NoMatchReason::OutOfFrame)?;
                }
            }
        }
    }

    let means: Vec<f64> = samples
        .iter()
        .map(|s| s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64)
        .collect();
    let lo = means.iter().copied().fold(f64::MAX, f64::min);
    let hi = means.iter().copied().fold(f64::MIN, f64::max);
    if hi - lo < MIN_CONTRAST {
        return Err(NoMatchReason::LowContrast);
    }
    let threshold = otsu_threshold(samples.iter().flatten().copied());
    let dark: Vec<bool> = samples
        .iter()
        .map(|s| s.iter().filter(|&&v| v <= threshold).count() * 2 > s.len())
        .collect();

    for r in 0..cells {
        for c in 0..cells {
            let on_border = r == 0 || c == 0 || r == cells - 1 || c == cells - 1;
            if on_border && !dark[r * cells + c] {
                return Err(NoMatchReason::Border);
            }
        }
    }

    let mut observed = 0u64;
    for r in 0..n {
        for c in 0..n {
            if !dark[(r + 1) * cells + c + 1] {
                observed |= 1 << (r * n + c);
            }
        }
    }

    // Best (distance, id, turns); a second id at the same distance is a tie.
    let mut best: Option<(u32, usize, usize)> = None;
    let mut tied = false;
    for (id, &code) in dict.codes.iter().enumerate() {
        for (k, rot) in rotations(code, dict.grid_n).iter().enumerate() {
            let dist = hamming(observed, *rot);
            match best {
                Some((d, best_id, _)) if dist == d && id != best_id => tied = true,
                Some((d, _, _)) if dist >= d => {}
                _ => {
                    best = Some((dist, id, k));
                    tied = false;
                }
            }
        }
    }
    let Some((dist, id, k)) = best else {
        return Err(NoMatchReason::NoCode);
    };
    if dist > dict.max_correction() {
        return Err(NoMatchReason::NoCode);
    }
    if tied {
        return Err(NoMatchReason::Ambiguous);
    }
    let expected = rotations(dict.codes[id], dict.grid_n)[k];
    let cell_dark = |r: i64, c: i64| {
        let (r, c) = (r as usize, c as usize);
        r == 0 || c == 0 || r == cells - 1 || c == cells - 1
            || expected >> ((r - 1) * n + c - 1) & 1 == 0
    };
    let (mut sums, mut counts) = ([0.0; 2], [0usize; 2]);
    for r in 0..cells {
        for c in 0..cells {
            let class = cell_dark(r as i64, c as i64) as usize;
            sums[class] += means[r * cells + c];
            counts[class] += 1;
        }
    }
    let refined = refine_homography(gray, midpoint(sums, counts), &h, cells, cell_dark);
    let turn = |q: [Vec2; 4]| [q[k], q[(k + 1) % 4], q[(k + 2) % 4], q[(k + 3) % 4]];
    Ok(DetectedMarker {
        id: id as u32,
        corners: turn(refined.as_ref().map_or(quad.corners, |r| grid.map(|p| r.apply(p)))),
        rotation_applied: k as u8,
        hamming: dist,
        marker_size: None,
        edge_corners: refined.map(|_| turn(quad.corners)),
    })
}
