//! Newline-delimited JSON pose records, one line per processed frame.
//!
//! Encoding is canonical: fixed key order, `t` and `q` with six decimals,
//! `err_px` with three, and negative zero written as zero. Encoding the
//! result of a parse reproduces the input bytes.

use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::matrix_to_quaternion;
use crate::record::{DetectionRecord, ObjectKind};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("object {id}: quaternion norm {norm} is not 1")]
    NotUnit { id: u32, norm: f64 },
    #[error("records span frames {0} and {1}")]
    MixedFrames(u64, u64),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct WireObject {
    pub id: u32,
    pub kind: ObjectKind,
    pub t: [f64; 3],
    /// `[w, x, y, z]` with `w >= 0`.
    pub q: [f64; 4],
    pub err_px: f64,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct WireRecord {
    pub v: u32,
    pub ts_us: u64,
    pub frame: u64,
    pub objects: Vec<WireObject>,
}

impl WireRecord {
    /// Builds the record for one frame; `records` must all carry `frame_index`.
    pub fn from_detections(
        frame_index: u64,
        timestamp_us: u64,
        records: &[DetectionRecord],
    ) -> Result<Self, WireError> {
        let mut objects = Vec::with_capacity(records.len());
        for r in records {
            if r.frame_index != frame_index {
                return Err(WireError::MixedFrames(frame_index, r.frame_index));
            }
            let q = matrix_to_quaternion(&r.pose.rotation)?;
            let t = r.pose.translation;
            objects.push(WireObject {
                id: r.object_id,
                kind: r.kind,
                t: [t.x, t.y, t.z],
                q: q.to_array(),
                err_px: r.rms_error,
                ambiguous: r.ambiguous,
            });
        }
        Ok(Self {
            v: PROTOCOL_VERSION,
            ts_us: timestamp_us,
            frame: frame_index,
            objects,
        })
    }

    pub fn encode(&self) -> String {
        let mut out = String::with_capacity(64 + 160 * self.objects.len());
        let _ = write!(
            out,
            "{{\"v\":{},\"ts_us\":{},\"frame\":{},\"objects\":[",
            self.v, self.ts_us, self.frame
        );
        for (i, o) in self.objects.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{{\"id\":{},\"kind\":\"{}\",\"t\":", o.id, o.kind.as_str());
            push_array(&mut out, &o.t, 6);
            out.push_str(",\"q\":");
            push_array(&mut out, &o.q, 6);
            out.push_str(",\"err_px\":");
            out.push_str(&fixed(o.err_px, 3));
            let _ = write!(out, ",\"ambiguous\":{}}}", o.ambiguous);
        }
        out.push_str("]}\n");
        out
    }

    pub fn parse(line: &str) -> Result<Self, WireError> {
        let rec: WireRecord = serde_json::from_str(line.trim_end_matches('\n'))?;
        if rec.v != PROTOCOL_VERSION {
            return Err(WireError::Version(rec.v));
        }
        for o in &rec.objects {
            let norm = o.q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(WireError::NotUnit { id: o.id, norm });
            }
        }
        Ok(rec)
    }
}

fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

fn push_array(out: &mut String, values: &[f64], decimals: usize) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fixed(*v, decimals));
    }
    out.push(']');
}

/// Canonical line for one processed frame.
pub fn encode_record(
    frame_index: u64,
    timestamp_us: u64,
    records: &[DetectionRecord],
) -> Result<String, WireError> {
    Ok(WireRecord::from_detections(frame_index, timestamp_us, records)?.encode())
}
