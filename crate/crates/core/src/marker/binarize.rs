use crate::imaging::{BinaryMask, GrayFrame};
use crate::par::{self, Execution};

use super::MarkerError;

pub const DEFAULT_WINDOW: u32 = 15;
pub const DEFAULT_OFFSET: i32 = 7;

/// Local-mean threshold: a pixel is dark when it is below the mean of its
/// `window × window` neighborhood minus `offset`. The window is clipped at the
/// image border and the mean is taken over the clipped area.
pub fn binarize_adaptive(
    gray: &GrayFrame,
    window: u32,
    offset: i32,
) -> Result<BinaryMask, MarkerError> {
    binarize_adaptive_with(gray, window, offset, Execution::default())
}

pub fn binarize_adaptive_with(
    gray: &GrayFrame,
    window: u32,
    offset: i32,
    exec: Execution,
) -> Result<BinaryMask, MarkerError> {
    if window < 3 || window % 2 == 0 {
        return Err(MarkerError::InvalidRequest(format!(
            "window must be odd and >= 3, got {window}"
        )));
    }
    let (w, h) = (gray.width as usize, gray.height as usize);
    let stride = w + 1;
    let mut integral = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0u64;
        for x in 0..w {
            row_sum += gray.pixels[y * w + x] as u64;
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row_sum;
        }
    }
    let r = (window / 2) as usize;
    let mut bits = vec![false; w * h];
    par::for_each_row(exec, &mut bits, w, |y, row| {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r).min(h - 1) + 1;
        for (x, bit) in row.iter_mut().enumerate() {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(w - 1) + 1;
            let sum = integral[y1 * stride + x1] + integral[y0 * stride + x0]
                - integral[y0 * stride + x1]
                - integral[y1 * stride + x0];
            let area = ((y1 - y0) * (x1 - x0)) as i64;
            let v = gray.pixels[y * w + x] as i64;
            *bit = (v + offset as i64) * area < sum as i64;
        }
    });
    Ok(BinaryMask {
        width: gray.width,
        height: gray.height,
        bits,
    })
}

/// Otsu's threshold over 8-bit samples: values `<= t` form the dark class.
pub fn otsu_threshold(values: impl IntoIterator<Item = u8>) -> u8 {
    let mut hist = [0u64; 256];
    let mut total = 0u64;
    for v in values {
        hist[v as usize] += 1;
        total += 1;
    }
    if total == 0 {
        return 127;
    }
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0f64, 0f64);
    let (mut best_t, mut best_var) = (0u8, -1f64);
    for t in 0..256 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total as f64 - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Global Otsu binarization, used as the baseline adaptive thresholding beats
/// under uneven lighting.
pub fn binarize_otsu(gray: &GrayFrame) -> BinaryMask {
    let t = otsu_threshold(gray.pixels.iter().copied());
    BinaryMask {
        width: gray.width,
        height: gray.height,
        bits: gray.pixels.iter().map(|&v| v <= t).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_frame_has_no_dark_pixels() {
        for v in [0u8, 7, 100, 255] {
            let g = GrayFrame::filled(40, 30, v);
            assert_eq!(binarize_adaptive(&g, 15, 7).unwrap().count(), 0);
        }
    }

    #[test]
    fn small_black_square_is_dark() {
        let mut g = GrayFrame::filled(40, 40, 255);
        for y in 15..25 {
            for x in 15..25 {
                g.pixels[y * 40 + x] = 0;
            }
        }
        let m = binarize_adaptive(&g, 15, 7).unwrap();
        for y in 0..40u32 {
            for x in 0..40u32 {
                let inside = (15..25).contains(&x) && (15..25).contains(&y);
                assert_eq!(m.get(x, y), inside, "({x},{y})");
            }
        }
    }

    #[test]
    fn rejects_bad_window() {
        let g = GrayFrame::filled(4, 4, 0);
        assert!(binarize_adaptive(&g, 4, 7).is_err());
        assert!(binarize_adaptive(&g, 1, 7).is_err());
    }

    #[test]
    fn policies_agree() {
        let pixels = (0..97 * 61).map(|i| ((i * 37) % 251) as u8).collect();
        let g = GrayFrame::new(97, 61, pixels).unwrap();
        assert_eq!(
            binarize_adaptive_with(&g, 15, 7, Execution::Sequential).unwrap(),
            binarize_adaptive_with(&g, 15, 7, Execution::Parallel).unwrap()
        );
    }

    #[test]
    fn otsu_splits_bimodal() {
        let values = [10u8; 50].into_iter().chain([200u8; 50]);
        let t = otsu_threshold(values);
        assert!((10..200).contains(&t));
    }
}
