//! Pixel-level primitives: frames, color conversion, background differencing
//! and masking.

use thiserror::Error;

use crate::par::{self, Execution};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImagingError {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },
    #[error("buffer length {actual} does not match {width}x{height} (expected {expected})")]
    BufferLength {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
}

fn check_dims(a: (u32, u32), b: (u32, u32)) -> Result<(), ImagingError> {
    if a == b {
        Ok(())
    } else {
        Err(ImagingError::DimensionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        })
    }
}

/// Row-major RGB8 image with stream metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub timestamp_us: u64,
    pub frame_index: u64,
}

impl Frame {
    pub fn new(
        width: u32,
        height: u32,
        pixels: Vec<u8>,
        timestamp_us: u64,
        frame_index: u64,
    ) -> Result<Self, ImagingError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImagingError::BufferLength {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp_us,
            frame_index,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
            timestamp_us: 0,
            frame_index: 0,
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_gray(&self) -> GrayFrame {
        self.to_gray_with(Execution::default())
    }

    /// BT.601 luma, rounded to nearest.
    pub fn to_gray_with(&self, exec: Execution) -> GrayFrame {
        let w = self.width as usize;
        let mut out = vec![0u8; w * self.height as usize];
        par::for_each_row(exec, &mut out, w, |y, row| {
            let src = &self.pixels[y * w * 3..(y + 1) * w * 3];
            for (dst, px) in row.iter_mut().zip(src.chunks_exact(3)) {
                *dst = luma(px[0], px[1], px[2]);
            }
        });
        GrayFrame {
            width: self.width,
            height: self.height,
            pixels: out,
        }
    }
}

pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ImagingError::BufferLength {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Signed-coordinate lookup; anything outside the image reads as unset.
    pub fn get_or_false(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as u32) < self.width
            && (y as u32) < self.height
            && self.get(x as u32, y as u32)
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsvPixel {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Hexcone RGB→HSV. Gray pixels get hue 0.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> HsvPixel {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let v = max as f64 / 255.0;
    if max == 0 || max == min {
        return HsvPixel { h: 0.0, s: 0.0, v };
    }
    let delta = (max - min) as f64;
    let s = delta / max as f64;
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let sector = if max as f64 == r {
        (g - b) / delta
    } else if max as f64 == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = sector * 60.0;
    if h < 0.0 {
        h += 360.0;
    }
    if h >= 360.0 {
        h -= 360.0;
    }
    HsvPixel { h, s, v }
}

/// Foreground where the rounded mean absolute channel difference exceeds `threshold`.
pub fn background_mask(
    current: &Frame,
    background: &Frame,
    threshold: u8,
) -> Result<BinaryMask, ImagingError> {
    background_mask_with(current, background, threshold, Execution::default())
}

pub fn background_mask_with(
    current: &Frame,
    background: &Frame,
    threshold: u8,
    exec: Execution,
) -> Result<BinaryMask, ImagingError> {
    check_dims(current.dims(), background.dims())?;
    let w = current.width as usize;
    let mut bits = vec![false; w * current.height as usize];
    par::for_each_row(exec, &mut bits, w, |y, row| {
        let a = &current.pixels[y * w * 3..(y + 1) * w * 3];
        let b = &background.pixels[y * w * 3..(y + 1) * w * 3];
        for (x, bit) in row.iter_mut().enumerate() {
            let i = x * 3;
            let sum = a[i].abs_diff(b[i]) as u32
                + a[i + 1].abs_diff(b[i + 1]) as u32
                + a[i + 2].abs_diff(b[i + 2]) as u32;
            // Nearest-integer mean; a sum of three integers never lands on .5.
            let gray = (sum + 1) / 3;
            *bit = gray > threshold as u32;
        }
    });
    Ok(BinaryMask {
        width: current.width,
        height: current.height,
        bits,
    })
}

/// Zeroes every pixel outside the mask.
pub fn apply_mask(frame: &Frame, mask: &BinaryMask) -> Result<Frame, ImagingError> {
    check_dims(frame.dims(), (mask.width, mask.height))?;
    let mut out = frame.clone();
    for (px, keep) in out.pixels.chunks_exact_mut(3).zip(&mask.bits) {
        if !keep {
            px.fill(0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_frame(w: u32, h: u32, seed: u64) -> Frame {
        let mut s = seed;
        let pixels = (0..w * h * 3)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            })
            .collect();
        Frame::new(w, h, pixels, 0, 0).unwrap()
    }

    #[test]
    fn hsv_reference_colors() {
        assert_eq!(rgb_to_hsv(255, 0, 0), HsvPixel { h: 0.0, s: 1.0, v: 1.0 });
        assert_eq!(rgb_to_hsv(0, 0, 0), HsvPixel { h: 0.0, s: 0.0, v: 0.0 });
        let gray = rgb_to_hsv(128, 128, 128);
        assert_eq!((gray.h, gray.s), (0.0, 0.0));
        assert!((gray.v - 0.50196).abs() < 1e-5);
        assert_eq!(rgb_to_hsv(0, 255, 0).h, 120.0);
        assert_eq!(rgb_to_hsv(0, 0, 255).h, 240.0);
        assert_eq!(rgb_to_hsv(255, 0, 255).h, 300.0);
        let almost_red = rgb_to_hsv(255, 0, 1);
        assert!(almost_red.h > 359.0 && almost_red.h < 360.0);
    }

    #[test]
    fn background_threshold_is_strict() {
        let bg = Frame::filled(4, 3, [100, 100, 100]);
        assert_eq!(background_mask(&bg, &bg, 50).unwrap().count(), 0);

        let mut cur = bg.clone();
        cur.set_pixel(2, 1, [160, 160, 160]);
        let m = background_mask(&cur, &bg, 50).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(2, 1));

        cur.set_pixel(2, 1, [150, 150, 150]);
        assert_eq!(background_mask(&cur, &bg, 50).unwrap().count(), 0);

        // Mean of (51, 51, 50) is 50.67, rounds to 51.
        cur.set_pixel(2, 1, [151, 151, 150]);
        assert_eq!(background_mask(&cur, &bg, 50).unwrap().count(), 1);
        // Mean of (51, 50, 50) is 50.33, rounds to 50.
        cur.set_pixel(2, 1, [151, 150, 150]);
        assert_eq!(background_mask(&cur, &bg, 50).unwrap().count(), 0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Frame::filled(4, 3, [0; 3]);
        let b = Frame::filled(3, 4, [0; 3]);
        assert!(matches!(
            background_mask(&a, &b, 50),
            Err(ImagingError::DimensionMismatch { .. })
        ));
        assert!(apply_mask(&a, &BinaryMask::new(3, 4, true)).is_err());
        assert!(Frame::new(2, 2, vec![0; 11], 0, 0).is_err());
    }

    #[test]
    fn apply_mask_extremes_and_checkerboard() {
        let f = random_frame(9, 7, 3);
        assert_eq!(apply_mask(&f, &BinaryMask::new(9, 7, true)).unwrap(), f);
        let black = apply_mask(&f, &BinaryMask::new(9, 7, false)).unwrap();
        assert!(black.pixels.iter().all(|&p| p == 0));

        let mut checker = BinaryMask::new(9, 7, false);
        for y in 0..7 {
            for x in 0..9 {
                checker.set(x, y, (x + y) % 2 == 0);
            }
        }
        let out = apply_mask(&f, &checker).unwrap();
        for y in 0..7 {
            for x in 0..9 {
                let want = if (x + y) % 2 == 0 { f.pixel(x, y) } else { [0; 3] };
                assert_eq!(out.pixel(x, y), want, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn gray_policies_agree() {
        let f = random_frame(33, 17, 9);
        assert_eq!(f.to_gray_with(Execution::Sequential), f.to_gray_with(Execution::Parallel));
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(255, 0, 0), 76);
    }

    proptest! {
        #[test]
        fn self_difference_is_background(seed in any::<u64>(), tau in any::<u8>()) {
            let f = random_frame(8, 6, seed);
            prop_assert_eq!(background_mask(&f, &f, tau).unwrap().count(), 0);
        }

        #[test]
        fn raising_threshold_never_adds_foreground(a in any::<u64>(), b in any::<u64>(), t1 in any::<u8>(), t2 in any::<u8>()) {
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let f = random_frame(8, 6, a);
            let g = random_frame(8, 6, b);
            let m_lo = background_mask(&f, &g, lo).unwrap();
            let m_hi = background_mask(&f, &g, hi).unwrap();
            for (h, l) in m_hi.bits.iter().zip(&m_lo.bits) {
                prop_assert!(!*h || *l);
            }
        }

        #[test]
        fn grays_have_zero_saturation(v in 0.0f64..=1.0) {
            let c = (v * 255.0).round() as u8;
            prop_assert_eq!(rgb_to_hsv(c, c, c).s, 0.0);
        }

        #[test]
        fn hsv_in_range(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
            let p = rgb_to_hsv(r, g, b);
            prop_assert!(p.h >= 0.0 && p.h < 360.0);
            prop_assert!((0.0..=1.0).contains(&p.s) && (0.0..=1.0).contains(&p.v));
        }

        #[test]
        fn apply_mask_is_idempotent(seed in any::<u64>(), mseed in any::<u64>()) {
            let f = random_frame(8, 6, seed);
            let m = background_mask(&f, &random_frame(8, 6, mseed), 60).unwrap();
            let once = apply_mask(&f, &m).unwrap();
            prop_assert_eq!(apply_mask(&once, &m).unwrap(), once);
        }
    }
}
