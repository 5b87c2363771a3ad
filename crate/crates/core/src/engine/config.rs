use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::colored_points::{ColorClass, ColoredPointsConfig, ObjectTopology};
use crate::marker::binarize::{DEFAULT_OFFSET, DEFAULT_WINDOW};
use crate::synth::{CameraSpec, DictionarySpec};

use super::EngineError;

pub const CONFIG_SCHEMA: &str = "fidtrack-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub enabled: bool,
    /// Foreground threshold τ on the mean absolute channel difference.
    pub threshold: u8,
    /// Frames averaged into the reference background.
    pub capture_frames: u32,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: 50,
            capture_frames: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColoredPointsSection {
    pub params: ColoredPointsConfig,
    pub classes: Vec<ColorClass>,
    pub topologies: Vec<ObjectTopology>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerSpec {
    pub id: u32,
    /// Edge length in meters.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinarySection {
    pub enabled: bool,
    pub dictionary: DictionarySpec,
    pub window: u32,
    pub offset: i32,
    pub min_area: f64,
    /// Only listed ids are tracked; each needs a physical size for its pose.
    pub markers: Vec<MarkerSpec>,
}

impl Default for BinarySection {
    fn default() -> Self {
        Self {
            enabled: true,
            dictionary: DictionarySpec::default(),
            window: DEFAULT_WINDOW,
            offset: DEFAULT_OFFSET,
            min_area: 100.0,
            markers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Unix,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub transport: Transport,
    /// Socket path for the unix transport.
    pub path: String,
    /// Loopback port for the tcp transport.
    pub port: u16,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            transport: if cfg!(unix) { Transport::Unix } else { Transport::Tcp },
            path: "/tmp/fidtrack.sock".into(),
            port: 7700,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub port: u16,
    /// Directory served under `/ui/`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ui_dir: Option<String>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            port: 7701,
            ui_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    pub schema: String,
    pub camera: CameraSpec,
    #[serde(default)]
    pub background: BackgroundConfig,
    #[serde(default)]
    pub colored_points: ColoredPointsSection,
    #[serde(default)]
    pub binary: BinarySection,
    #[serde(default)]
    pub stream: StreamConfig,
    #[serde(default)]
    pub control: ControlConfig,
}

impl TrackerConfig {
    pub fn new(camera: CameraSpec) -> Self {
        Self {
            schema: CONFIG_SCHEMA.into(),
            camera,
            background: BackgroundConfig::default(),
            colored_points: ColoredPointsSection::default(),
            binary: BinarySection::default(),
            stream: StreamConfig::default(),
            control: ControlConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        let cfg: TrackerConfig =
            toml::from_str(text).map_err(|e| EngineError::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let cfg: TrackerConfig =
            serde_json::from_str(text).map_err(|e| EngineError::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical JSON form: field order follows the struct definitions.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(EngineError::Config(v))
        }
    }

    /// Every violated invariant, each prefixed with the offending field path.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema != CONFIG_SCHEMA {
            out.push(format!("schema: must be \"{CONFIG_SCHEMA}\", got \"{}\"", self.schema));
        }
        for v in self.camera.intrinsics.violations() {
            out.push(format!("camera.intrinsics: {v}"));
        }
        if self.camera.distortion.validate().is_err() {
            out.push("camera.distortion: coefficients must be finite".into());
        }
        if self.background.capture_frames == 0 {
            out.push("background.capture_frames: must be >= 1".into());
        }

        let cp = &self.colored_points;
        for v in cp.params.violations() {
            out.push(format!("colored_points.params: {v}"));
        }
        let mut class_ids = BTreeSet::new();
        for (i, c) in cp.classes.iter().enumerate() {
            if !class_ids.insert(c.id) {
                out.push(format!("colored_points.classes[{i}]: duplicate class id {}", c.id));
            }
            for v in c.range.violations() {
                out.push(format!("colored_points.classes[{i}].range: {v}"));
            }
        }
        if cp.classes.len() >= u16::MAX as usize {
            out.push("colored_points.classes: too many classes".into());
        }
        let mut object_ids = BTreeSet::new();
        for (i, t) in cp.topologies.iter().enumerate() {
            for v in t.violations() {
                out.push(format!("colored_points.topologies[{i}]: {v}"));
            }
            for slot in t.corner_classes() {
                if !class_ids.contains(&slot) {
                    out.push(format!(
                        "colored_points.topologies[{i}]: class {slot} is not defined"
                    ));
                }
            }
            if !object_ids.insert(t.object_id) {
                out.push(format!(
                    "colored_points.topologies[{i}]: object id {} is not unique",
                    t.object_id
                ));
            }
        }

        let b = &self.binary;
        if b.window < 3 || b.window % 2 == 0 {
            out.push("binary.window: must be odd and >= 3".into());
        }
        if !(b.min_area.is_finite() && b.min_area > 0.0) {
            out.push("binary.min_area: must be > 0".into());
        }
        let d = &b.dictionary;
        if d.path.is_none() && (d.count == 0 || d.d_min == 0 || !(2..=8).contains(&d.grid_n)) {
            out.push("binary.dictionary: count >= 1, d_min >= 1 and grid_n in 2..=8 required".into());
        }
        for (i, m) in b.markers.iter().enumerate() {
            if !(m.size.is_finite() && m.size > 0.0) {
                out.push(format!("binary.markers[{i}].size: must be > 0"));
            }
            if d.path.is_none() && m.id as usize >= d.count {
                out.push(format!(
                    "binary.markers[{i}].id: {} exceeds dictionary size {}",
                    m.id, d.count
                ));
            }
            if !object_ids.insert(m.id) {
                out.push(format!(
                    "binary.markers[{i}].id: object id {} is not unique across detectors",
                    m.id
                ));
            }
        }

        if self.stream.transport == Transport::Unix && self.stream.path.is_empty() {
            out.push("stream.path: must not be empty for the unix transport".into());
        }
        if self.stream.transport == Transport::Tcp && self.stream.port == 0 {
            out.push("stream.port: must be nonzero".into());
        }
        out
    }

    /// Object ids the tracker reports on, sorted.
    pub fn object_ids(&self) -> Vec<u32> {
        let mut ids: BTreeSet<u32> = self
            .colored_points
            .topologies
            .iter()
            .map(|t| t.object_id)
            .collect();
        if self.binary.enabled {
            ids.extend(self.binary.markers.iter().map(|m| m.id));
        }
        ids.into_iter().collect()
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::colored_points::HsvRange;
    use crate::geometry::{CameraIntrinsics, DistortionCoeffs};

    pub(crate) fn sample() -> TrackerConfig {
        let mut c = TrackerConfig::new(CameraSpec {
            intrinsics: CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 640, 480).unwrap(),
            distortion: DistortionCoeffs::zero(),
        });
        let range = |h_lo, h_hi| HsvRange {
            h_lo,
            h_hi,
            s_lo: 0.5,
            s_hi: 1.0,
            v_lo: 0.3,
            v_hi: 1.0,
        };
        c.colored_points.classes = vec![
            ColorClass { id: 0, name: "red".into(), range: range(340.0, 20.0) },
            ColorClass { id: 1, name: "green".into(), range: range(100.0, 140.0) },
            ColorClass { id: 2, name: "blue".into(), range: range(220.0, 260.0) },
            ColorClass { id: 3, name: "yellow".into(), range: range(50.0, 70.0) },
        ];
        c.colored_points.topologies = vec![ObjectTopology {
            object_id: 100,
            lines: [[0, 1], [3, 2]],
            marker_size: 0.1,
            disk_radius: 0.0,
        }];
        c.binary.markers = vec![MarkerSpec { id: 7, size: 0.05 }];
        c
    }
}
