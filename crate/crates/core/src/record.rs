use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Binary,
    Colored,
}

impl ObjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Binary => "binary",
            ObjectKind::Colored => "colored",
        }
    }
}

/// One resolved object in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub frame_index: u64,
    pub timestamp_us: u64,
    pub object_id: u32,
    pub kind: ObjectKind,
    pub pose: Pose,
    pub rms_error: f64,
    pub ambiguous: bool,
}
