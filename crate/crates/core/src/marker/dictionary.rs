use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MarkerError;

/// Candidates tried before giving up on a dictionary request.
pub const MAX_CANDIDATES: u64 = 1_000_000;

/// Bit `row * n + col` of a code; 1 is a white cell, 0 a black one.
pub fn code_bit(code: u64, n: u32, row: u32, col: u32) -> bool {
    (code >> (row * n + col)) & 1 == 1
}

/// Quarter turn clockwise as seen in the image: `out[r][c] = in[n-1-c][r]`.
pub fn rotate_code(code: u64, n: u32) -> u64 {
    let mut out = 0u64;
    for r in 0..n {
        for c in 0..n {
            if code_bit(code, n, n - 1 - c, r) {
                out |= 1 << (r * n + c);
            }
        }
    }
    out
}

pub fn rotations(code: u64, n: u32) -> [u64; 4] {
    let r1 = rotate_code(code, n);
    let r2 = rotate_code(r1, n);
    [code, r1, r2, rotate_code(r2, n)]
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// Smallest Hamming distance between a code and its own 90°, 180° and 270° turns.
pub fn self_rotation_distance(code: u64, n: u32) -> u32 {
    rotations(code, n)[1..]
        .iter()
        .map(|&r| hamming(code, r))
        .min()
        .unwrap_or(0)
}

/// Smallest distance between `a` and any rotation of `b`.
pub fn rotation_aware_distance(a: u64, b: u64, n: u32) -> u32 {
    rotations(b, n)
        .iter()
        .map(|&r| hamming(a, r))
        .min()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerDictionary {
    pub grid_n: u32,
    pub codes: Vec<u64>,
    pub d_min: u32,
    /// Generation seed; `None` for dictionaries loaded from text.
    pub seed: Option<u64>,
}

impl MarkerDictionary {
    /// Bit errors a decoder may correct while staying unambiguous.
    pub fn max_correction(&self) -> u32 {
        self.d_min.saturating_sub(1) / 2
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Actual rotation-aware minimum distance over all code pairs and self-rotations.
    pub fn measured_min_distance(&self) -> u32 {
        let n = self.grid_n;
        let mut best = u32::MAX;
        for (i, &a) in self.codes.iter().enumerate() {
            best = best.min(self_rotation_distance(a, n));
            for &b in &self.codes[i + 1..] {
                best = best.min(rotation_aware_distance(a, b, n));
            }
        }
        best
    }

    /// One line per code: id, a space, then n² bits as '0'/'1' in row-major order.
    pub fn to_text(&self) -> String {
        let bits = self.grid_n * self.grid_n;
        let mut out = String::new();
        for (id, &code) in self.codes.iter().enumerate() {
            let _ = write!(out, "{id} ");
            for i in 0..bits {
                out.push(if (code >> i) & 1 == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MarkerError> {
        let mut codes = Vec::new();
        let mut grid_n = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: &str| MarkerError::Parse {
                line: lineno + 1,
                message: msg.to_string(),
            };
            let (id, bits) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| parse_err("expected '<id> <bits>'"))?;
            let id: usize = id.parse().map_err(|_| parse_err("invalid id"))?;
            if id != codes.len() {
                return Err(parse_err("ids must be consecutive from 0"));
            }
            let bits = bits.trim();
            let n = (bits.len() as f64).sqrt().round() as u32;
            if n == 0 || (n * n) as usize != bits.len() || n > 8 {
                return Err(parse_err("bit count must be a square no larger than 64"));
            }
            if *grid_n.get_or_insert(n) != n {
                return Err(parse_err("all codes must share one grid size"));
            }
            let mut code = 0u64;
            for (i, ch) in bits.chars().enumerate() {
                match ch {
                    '0' => {}
                    '1' => code |= 1 << i,
                    _ => return Err(parse_err("bits must be '0' or '1'")),
                }
            }
            codes.push(code);
        }
        let grid_n = grid_n.ok_or(MarkerError::Parse {
            line: 0,
            message: "dictionary is empty".into(),
        })?;
        let mut dict = Self {
            grid_n,
            codes,
            d_min: 0,
            seed: None,
        };
        dict.d_min = dict.measured_min_distance();
        Ok(dict)
    }
}

/// Greedy seeded search for `count` codes that stay `d_min` apart under rotation.
pub fn generate_dictionary(
    count: usize,
    grid_n: u32,
    d_min: u32,
    seed: u64,
) -> Result<MarkerDictionary, MarkerError> {
    if count == 0 {
        return Err(MarkerError::InvalidRequest("count must be >= 1".into()));
    }
    if d_min == 0 {
        return Err(MarkerError::InvalidRequest("d_min must be >= 1".into()));
    }
    if !(2..=8).contains(&grid_n) {
        return Err(MarkerError::InvalidRequest("grid_n must be in 2..=8".into()));
    }
    let bits = grid_n * grid_n;
    let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codes: Vec<u64> = Vec::with_capacity(count);
    // All rotations of accepted codes, so each check is a flat scan.
    let mut taken: Vec<u64> = Vec::with_capacity(count * 4);

    for _ in 0..MAX_CANDIDATES {
        let candidate = rng.random::<u64>() & mask;
        if self_rotation_distance(candidate, grid_n) < d_min {
            continue;
        }
        if taken.iter().any(|&t| hamming(candidate, t) < d_min) {
            continue;
        }
        taken.extend_from_slice(&rotations(candidate, grid_n));
        codes.push(candidate);
        if codes.len() == count {
            return Ok(MarkerDictionary {
                grid_n,
                codes,
                d_min,
                seed: Some(seed),
            });
        }
    }
    Err(MarkerError::Infeasible {
        count,
        d_min,
        found: codes.len(),
    })
}
