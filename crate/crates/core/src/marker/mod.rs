//! Square binary markers: a rotation-aware code dictionary, local-mean
//! binarization, quad extraction and cell-grid decoding.

pub mod binarize;
pub mod decode;
pub mod dictionary;
pub mod quads;
pub mod refine;

use thiserror::Error;

use crate::geometry::Vec2;
use crate::imaging::GrayFrame;

pub use binarize::{binarize_adaptive, binarize_otsu, otsu_threshold};
pub use decode::decode;
pub use dictionary::{generate_dictionary, MarkerDictionary};
pub use quads::{extract_quads, Quad, QuadParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarkerError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("only {found} of {count} codes found with minimum distance {d_min}")]
    Infeasible {
        count: usize,
        d_min: u32,
        found: usize,
    },
    #[error("dictionary line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Why a quad did not decode.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum NoMatchReason {
    #[error("quad does not define a homography")]
    Degenerate,
    #[error("sample points fall outside the frame")]
    OutOfFrame,
    #[error("cell grid has no contrast")]
    LowContrast,
    #[error("border cell is not dark")]
    Border,
    #[error("no code within correction distance")]
    NoCode,
    #[error("two codes match equally well")]
    Ambiguous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedMarker {
    pub id: u32,
    /// Image pixels of the marker-frame TL, TR, BR, BL corners.
    pub corners: [Vec2; 4],
    /// Quarter turns clockwise between the code and the observed pattern.
    pub rotation_applied: u8,
    pub hamming: u32,
    /// Physical edge length in meters, filled from configuration.
    pub marker_size: Option<f64>,
    /// Border-fit corners in the same order, when whole-pattern refinement
    /// replaced them. On small or noisy markers the refinement can be the
    /// worse of the two, which only the pose fit can tell.
    pub edge_corners: Option<[Vec2; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub window: u32,
    pub offset: i32,
    pub quads: QuadParams,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            window: binarize::DEFAULT_WINDOW,
            offset: binarize::DEFAULT_OFFSET,
            quads: QuadParams::default(),
        }
    }
}

/// Full detection pass over a gray frame. When several quads decode to the
/// same id, the one with the lowest Hamming distance (then largest area) wins.
pub fn detect_markers(
    gray: &GrayFrame,
    dict: &MarkerDictionary,
    params: &DetectorParams,
    exec: crate::par::Execution,
) -> Result<Vec<DetectedMarker>, MarkerError> {
    let mask = binarize::binarize_adaptive_with(gray, params.window, params.offset, exec)?;
    let quads = quads::extract_quads_with(&mask, &params.quads);
    let mut found: Vec<DetectedMarker> = Vec::new();
    // Quads arrive largest first, so a strict comparison keeps the larger one on ties.
    for q in &quads {
        let Ok(m) = decode(gray, q, dict) else {
            continue;
        };
        match found.iter_mut().find(|f| f.id == m.id) {
            Some(prev) if m.hamming < prev.hamming => *prev = m,
            Some(_) => {}
            None => found.push(m),
        }
    }
    found.sort_by_key(|m| m.id);
    Ok(found)
}
