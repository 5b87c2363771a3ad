//! Ground-truth scene renderer. Every pixel casts a ray through the camera
//! model and takes the color of the nearest marker plane it hits, without
//! anti-aliasing.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    axis_angle_to_matrix, project_point, AxisAngle, CameraIntrinsics, DistortionCoeffs, Pose,
    Vec2, Vec3,
};
use crate::imaging::Frame;
use crate::marker::dictionary::code_bit;
use crate::marker::{generate_dictionary, MarkerDictionary, MarkerError};
use crate::par::{self, Execution};
use crate::pose::square_model;
use crate::record::ObjectKind;

pub const SCENE_SCHEMA: &str = "fidtrack-scene/1";
/// Colored-point disk radius as a fraction of the marker edge.
pub const DISK_RADIUS_FRACTION: f64 = 0.15;
pub const FRAME_INTERVAL_US: u64 = 1_000_000 / 30;

pub const BLACK: [u8; 3] = [0, 0, 0];
pub const WHITE: [u8; 3] = [255, 255, 255];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("scene parse error: {0}")]
    Parse(String),
    #[error("frame {index} out of range (scene has {frames})")]
    FrameOutOfRange { index: u64, frames: u64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Marker(#[from] MarkerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub distortion: DistortionCoeffs,
}

/// Either a dictionary file or the parameters to generate one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub count: usize,
    pub grid_n: u32,
    pub d_min: u32,
    pub seed: u64,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self {
            path: None,
            count: 50,
            grid_n: 4,
            d_min: 4,
            seed: 1,
        }
    }
}

impl DictionarySpec {
    /// Relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<MarkerDictionary, SceneError> {
        match &self.path {
            Some(p) => {
                let text = std::fs::read_to_string(base_dir.join(p))?;
                Ok(MarkerDictionary::from_text(&text)?)
            }
            None => Ok(generate_dictionary(
                self.count,
                self.grid_n,
                self.d_min,
                self.seed,
            )?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlacementKind {
    Binary {
        id: u32,
        /// Code bits inverted when drawing, to exercise error correction.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        flip_bits: Vec<u32>,
    },
    Colored {
        object_id: u32,
        /// Disk colors for the TL, TR, BR, BL corners.
        colors: [[u8; 3]; 4],
        /// Fill for the square between the disks; transparent when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        surface: Option<[u8; 3]>,
        /// Corners whose disks are not drawn.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        hidden_corners: Vec<usize>,
    },
}

/// A marker with linear motion: at frame `f` the rotation is
/// `exp(f·angular_velocity)·exp(rotation)` and the translation is
/// `translation + f·velocity`. Rotation vectors are axis-angle radians.
// Unknown-field checks cannot combine with the flattened kind tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    #[serde(flatten)]
    pub kind: PlacementKind,
    pub size: f64,
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub angular_velocity: [f64; 3],
    /// Half-open frame range in which the placement is drawn; always when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<[u64; 2]>,
}

impl Placement {
    pub fn pose_at(&self, frame: u64) -> Pose {
        let f = frame as f64;
        let spin = axis_angle_to_matrix(AxisAngle(Vec3::from(self.angular_velocity) * f));
        let base = axis_angle_to_matrix(AxisAngle(Vec3::from(self.rotation)));
        Pose::new(
            spin * base,
            Vec3::from(self.translation) + Vec3::from(self.velocity) * f,
        )
    }

    pub fn is_visible(&self, frame: u64) -> bool {
        self.visible.is_none_or(|[a, b]| frame >= a && frame < b)
    }

    pub fn object_id(&self) -> u32 {
        match &self.kind {
            PlacementKind::Binary { id, .. } => *id,
            PlacementKind::Colored { object_id, .. } => *object_id,
        }
    }

    pub fn object_kind(&self) -> ObjectKind {
        match self.kind {
            PlacementKind::Binary { .. } => ObjectKind::Binary,
            PlacementKind::Colored { .. } => ObjectKind::Colored,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub schema: String,
    pub frames: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_background")]
    pub background: [u8; 3],
    /// Horizontal illumination gain: linear from `[0]` at the left edge to `[1]` at the right.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<[f64; 2]>,
    pub camera: CameraSpec,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub placements: Vec<Placement>,
}

fn default_background() -> [u8; 3] {
    [200, 200, 200]
}

impl SceneScript {
    pub fn new(camera: CameraSpec, frames: u64) -> Self {
        Self {
            schema: SCENE_SCHEMA.to_string(),
            frames,
            seed: 0,
            noise_sigma: 0.0,
            background: default_background(),
            gradient: None,
            camera,
            dictionary: DictionarySpec::default(),
            placements: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SceneError> {
        let script: SceneScript = toml::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
        let v = script.violations();
        if !v.is_empty() {
            return Err(SceneError::Invalid(v));
        }
        Ok(script)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene scripts always serialize")
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema != SCENE_SCHEMA {
            out.push(format!("schema must be \"{SCENE_SCHEMA}\", got \"{}\"", self.schema));
        }
        out.extend(self.camera.intrinsics.violations());
        if self.camera.distortion.validate().is_err() {
            out.push("camera.distortion: coefficients must be finite".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            out.push("noise_sigma must be >= 0".into());
        }
        if let Some(g) = self.gradient {
            if !g.iter().all(|v| v.is_finite() && *v >= 0.0) {
                out.push("gradient gains must be >= 0".into());
            }
        }
        for (i, p) in self.placements.iter().enumerate() {
            if !(p.size.is_finite() && p.size > 0.0) {
                out.push(format!("placements[{i}].size must be > 0"));
            }
            let (first, last) = match p.visible {
                Some([a, b]) => (a, b.min(self.frames).saturating_sub(1)),
                None => (0, self.frames.saturating_sub(1)),
            };
            // Linear motion keeps z monotone, so the endpoints bound it.
            if first <= last
                && (p.pose_at(first).translation.z <= 0.0 || p.pose_at(last).translation.z <= 0.0)
            {
                out.push(format!("placements[{i}] must stay in front of the camera (z > 0)"));
            }
            if let PlacementKind::Colored { hidden_corners, .. } = &p.kind {
                if hidden_corners.iter().any(|&c| c > 3) {
                    out.push(format!("placements[{i}].hidden_corners must be in 0..=3"));
                }
            }
        }
        out
    }
}

/// Scripted state of one visible placement in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub object_id: u32,
    pub kind: ObjectKind,
    pub pose: Pose,
    pub marker_size: f64,
    /// Projected TL, TR, BR, BL model corners, when all are in front of the camera.
    pub corners: Option<[Vec2; 4]>,
}

/// A scene with its ray table and dictionary prepared for repeated rendering.
pub struct Renderer {
    script: SceneScript,
    dictionary: Option<MarkerDictionary>,
    /// Unit-depth ray direction per pixel, row-major.
    rays: Vec<Vec3>,
}

struct Surface<'a> {
    placement: &'a Placement,
    pose: Pose,
    normal: Vec3,
    offset: f64,
}

impl Renderer {
    /// `dictionary` is required when the script has binary placements.
    pub fn new(script: SceneScript, dictionary: Option<MarkerDictionary>) -> Result<Self, SceneError> {
        let mut v = script.violations();
        let needs_dict = script
            .placements
            .iter()
            .any(|p| matches!(p.kind, PlacementKind::Binary { .. }));
        match (&dictionary, needs_dict) {
            (None, true) => v.push("binary placements need a dictionary".into()),
            (Some(d), _) => {
                for (i, p) in script.placements.iter().enumerate() {
                    if let PlacementKind::Binary { id, flip_bits } = &p.kind {
                        if *id as usize >= d.len() {
                            v.push(format!("placements[{i}]: id {id} not in dictionary"));
                        }
                        if flip_bits.iter().any(|&b| b >= d.grid_n * d.grid_n) {
                            v.push(format!("placements[{i}]: flip_bits out of range"));
                        }
                    }
                }
            }
            _ => {}
        }
        if !v.is_empty() {
            return Err(SceneError::Invalid(v));
        }
        let k = script.camera.intrinsics;
        let d = script.camera.distortion;
        let (w, h) = (k.width as usize, k.height as usize);
        let mut rays = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let n = d.undistort(k.pixel_to_normalized(Vec2::new(x as f64, y as f64)));
                rays.push(Vec3::new(n.x, n.y, 1.0));
            }
        }
        Ok(Self {
            script,
            dictionary,
            rays,
        })
    }

    /// Loads the dictionary named by the script, resolving paths against `base_dir`.
    pub fn from_script(script: SceneScript, base_dir: &Path) -> Result<Self, SceneError> {
        let needs_dict = script
            .placements
            .iter()
            .any(|p| matches!(p.kind, PlacementKind::Binary { .. }));
        let dict = if needs_dict {
            Some(script.dictionary.load(base_dir)?)
        } else {
            None
        };
        Self::new(script, dict)
    }

    pub fn script(&self) -> &SceneScript {
        &self.script
    }

    pub fn dictionary(&self) -> Option<&MarkerDictionary> {
        self.dictionary.as_ref()
    }

    pub fn ground_truth(&self, index: u64) -> Vec<GroundTruth> {
        let k = &self.script.camera.intrinsics;
        let d = &self.script.camera.distortion;
        self.script
            .placements
            .iter()
            .filter(|p| p.is_visible(index))
            .map(|p| {
                let pose = p.pose_at(index);
                let corners = square_model(p.size)
                    .iter()
                    .map(|m| project_point(&pose, &Vec3::new(m.x, m.y, 0.0), k, d).ok())
                    .collect::<Option<Vec<_>>>()
                    .map(|c| [c[0], c[1], c[2], c[3]]);
                GroundTruth {
                    object_id: p.object_id(),
                    kind: p.object_kind(),
                    pose,
                    marker_size: p.size,
                    corners,
                }
            })
            .collect()
    }

    pub fn render(&self, index: u64) -> Result<(Frame, Vec<GroundTruth>), SceneError> {
        self.render_with(index, Execution::default())
    }

    pub fn render_with(
        &self,
        index: u64,
        exec: Execution,
    ) -> Result<(Frame, Vec<GroundTruth>), SceneError> {
        if index >= self.script.frames {
            return Err(SceneError::FrameOutOfRange {
                index,
                frames: self.script.frames,
            });
        }
        let surfaces: Vec<Surface> = self
            .script
            .placements
            .iter()
            .filter(|p| p.is_visible(index))
            .map(|p| {
                let pose = p.pose_at(index);
                let normal: Vec3 = pose.rotation.column(2).into();
                Surface {
                    placement: p,
                    offset: normal.dot(&pose.translation),
                    normal,
                    pose,
                }
            })
            .collect();

        let k = &self.script.camera.intrinsics;
        let w = k.width as usize;
        let mut pixels = vec![0u8; w * k.height as usize * 3];
        let noise = (self.script.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, self.script.noise_sigma).expect("sigma validated"));
        let seed = self
            .script
            .seed
            .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));

        par::for_each_row(exec, &mut pixels, w * 3, |y, row| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(y as u64);
            for x in 0..w {
                let ray = self.rays[y * w + x];
                let mut rgb = self.shade(&surfaces, &ray);
                if let Some([g0, g1]) = self.script.gradient {
                    let gain = g0 + (g1 - g0) * x as f64 / (w.max(2) - 1) as f64;
                    rgb = rgb.map(|c| (c as f64 * gain).round().clamp(0.0, 255.0) as u8);
                }
                if let Some(n) = &noise {
                    rgb = rgb.map(|c| (c as f64 + n.sample(&mut rng)).round().clamp(0.0, 255.0) as u8);
                }
                row[x * 3..x * 3 + 3].copy_from_slice(&rgb);
            }
        });

        let frame = Frame {
            width: k.width,
            height: k.height,
            pixels,
            timestamp_us: index * FRAME_INTERVAL_US,
            frame_index: index,
        };
        Ok((frame, self.ground_truth(index)))
    }

    fn shade(&self, surfaces: &[Surface], ray: &Vec3) -> [u8; 3] {
        let mut best: Option<(f64, [u8; 3])> = None;
        for s in surfaces {
            let denom = s.normal.dot(ray);
            if denom.abs() < 1e-12 {
                continue;
            }
            let depth = s.offset / denom;
            if depth <= 0.0 || best.is_some_and(|(d, _)| d <= depth) {
                continue;
            }
            let local = s.pose.rotation.transpose() * (ray * depth - s.pose.translation);
            if let Some(c) = self.surface_color(s.placement, local.x, local.y) {
                best = Some((depth, c));
            }
        }
        best.map_or(self.script.background, |(_, c)| c)
    }

    /// Color of the marker at model-plane coordinates, or `None` where it is transparent.
    fn surface_color(&self, p: &Placement, x: f64, y: f64) -> Option<[u8; 3]> {
        let half = p.size / 2.0;
        match &p.kind {
            PlacementKind::Binary { id, flip_bits } => {
                if x.abs() > half || y.abs() > half {
                    return None;
                }
                let dict = self.dictionary.as_ref()?;
                let n = dict.grid_n;
                let cells = (n + 2) as f64;
                let col = (((x + half) / p.size * cells).floor() as i64).clamp(0, n as i64 + 1);
                let row = (((half - y) / p.size * cells).floor() as i64).clamp(0, n as i64 + 1);
                if row == 0 || col == 0 || row == n as i64 + 1 || col == n as i64 + 1 {
                    return Some(BLACK);
                }
                let (r, c) = (row as u32 - 1, col as u32 - 1);
                let mut white = code_bit(dict.codes[*id as usize], n, r, c);
                if flip_bits.contains(&(r * n + c)) {
                    white = !white;
                }
                Some(if white { WHITE } else { BLACK })
            }
            PlacementKind::Colored {
                colors,
                surface,
                hidden_corners,
                ..
            } => {
                let radius = DISK_RADIUS_FRACTION * p.size;
                for (i, corner) in square_model(p.size).iter().enumerate() {
                    if hidden_corners.contains(&i) {
                        continue;
                    }
                    if (Vec2::new(x, y) - corner).norm() <= radius {
                        return Some(colors[i]);
                    }
                }
                if x.abs() <= half && y.abs() <= half {
                    *surface
                } else {
                    None
                }
            }
        }
    }
}

/// Renders one frame of `script` with its own dictionary.
pub fn render_frame(
    script: &SceneScript,
    dictionary: Option<&MarkerDictionary>,
    index: u64,
) -> Result<(Frame, Vec<GroundTruth>), SceneError> {
    Renderer::new(script.clone(), dictionary.cloned())?.render(index)
}

/// A black `width × height` frame with random blobs in `colors`. Each blob
/// is a random scatter of pixels whose extent per axis is at most
/// `dist_cutoff / √2`, and any two blobs' bounding boxes are more than
/// `2·dist_cutoff` apart, the regime where online clustering equals
/// linking-distance connected components.
pub fn scattered_blobs(seed: u64, width: u32, height: u32, dist_cutoff: f64, colors: &[[u8; 3]]) -> Frame {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frame = Frame::filled(width, height, BLACK);
    let span = ((dist_cutoff / std::f64::consts::SQRT_2).floor() as u32).max(1);
    let mut boxes: Vec<[u32; 4]> = Vec::new();
    let gap = |a: &[u32; 4], b: &[u32; 4]| {
        let dx = (a[0].max(b[0]) as f64 - a[2].min(b[2]) as f64).max(0.0);
        let dy = (a[1].max(b[1]) as f64 - a[3].min(b[3]) as f64).max(0.0);
        dx.hypot(dy)
    };
    for _ in 0..40 {
        if colors.is_empty() || width <= span || height <= span {
            break;
        }
        let (w, h) = (rng.random_range(0..=span), rng.random_range(0..=span));
        let x = rng.random_range(0..width - w);
        let y = rng.random_range(0..height - h);
        let b = [x, y, x + w, y + h];
        if boxes.iter().any(|o| gap(o, &b) <= 2.0 * dist_cutoff) {
            continue;
        }
        let color = colors[rng.random_range(0..colors.len())];
        let density = rng.random_range(0.3..=1.0);
        for py in y..=y + h {
            for px in x..=x + w {
                if rng.random_bool(density) {
                    frame.set_pixel(px, py, color);
                }
            }
        }
        boxes.push(b);
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;

    pub(crate) fn camera() -> CameraSpec {
        CameraSpec {
            intrinsics: CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 640, 480).unwrap(),
            distortion: DistortionCoeffs::zero(),
        }
    }

    fn facing() -> [f64; 3] {
        // Rotation by π about x: marker y up maps to image y down.
        [std::f64::consts::PI, 0.0, 0.0]
    }

    #[test]
    fn empty_scene_is_uniform_background() {
        let mut s = SceneScript::new(camera(), 2);
        s.background = [10, 20, 30];
        let (f, truth) = render_frame(&s, None, 1).unwrap();
        assert!(truth.is_empty());
        assert!(f.pixels.chunks_exact(3).all(|p| p == [10, 20, 30]));
        assert_eq!(f.frame_index, 1);
        assert!(render_frame(&s, None, 2).is_err());
    }

    #[test]
    fn frontal_marker_spans_eighty_pixels() {
        let dict = generate_dictionary(8, 4, 4, 1).unwrap();
        let mut s = SceneScript::new(camera(), 1);
        s.placements.push(Placement {
            kind: PlacementKind::Binary {
                id: 7,
                flip_bits: vec![],
            },
            size: 0.05,
            rotation: facing(),
            translation: [0.0, 0.0, 0.5],
            velocity: [0.0; 3],
            angular_velocity: [0.0; 3],
            visible: None,
        });
        let (f, truth) = render_frame(&s, Some(&dict), 0).unwrap();
        let row = 240u32;
        let dark: Vec<u32> = (0..640)
            .filter(|&x| f.pixel(x, row) == BLACK || f.pixel(x, row) == WHITE)
            .collect();
        let span = dark.last().unwrap() - dark.first().unwrap() + 1;
        assert!((79..=81).contains(&span), "span {span}");
        let c = truth[0].corners.unwrap();
        assert!((c[1].x - c[0].x - 80.0).abs() < 1e-9);
        assert!(c[0].y < c[3].y, "TL must be above BL");
        assert!((truth[0].pose.rotation - Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0))).amax() < 1e-12);
    }

    #[test]
    fn rendering_is_deterministic_and_policy_independent() {
        let mut s = SceneScript::new(camera(), 3);
        s.noise_sigma = 4.0;
        s.seed = 99;
        s.placements.push(Placement {
            kind: PlacementKind::Colored {
                object_id: 1,
                colors: [[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 255, 0]],
                surface: None,
                hidden_corners: vec![],
            },
            size: 0.1,
            rotation: [2.9, 0.2, 0.1],
            translation: [0.0, 0.0, 0.6],
            velocity: [0.001, 0.0, 0.0],
            angular_velocity: [0.0; 3],
            visible: None,
        });
        let r = Renderer::new(s.clone(), None).unwrap();
        let (a, _) = r.render_with(2, Execution::Sequential).unwrap();
        let (b, _) = r.render_with(2, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let (c, _) = render_frame(&s, None, 2).unwrap();
        assert_eq!(a, c);
        let (d, _) = r.render(1).unwrap();
        assert_ne!(a.pixels, d.pixels);
    }

    #[test]
    fn script_round_trips_through_toml() {
        let mut s = SceneScript::new(camera(), 5);
        s.placements.push(Placement {
            kind: PlacementKind::Binary {
                id: 3,
                flip_bits: vec![5],
            },
            size: 0.05,
            rotation: facing(),
            translation: [0.0, 0.0, 0.5],
            velocity: [0.0; 3],
            angular_velocity: [0.0, 0.01, 0.0],
            visible: Some([1, 4]),
        });
        let text = s.to_toml();
        assert_eq!(SceneScript::from_toml(&text).unwrap(), s);
    }

    #[test]
    fn invalid_scripts_are_rejected() {
        let mut s = SceneScript::new(camera(), 5);
        s.schema = "other".into();
        s.placements.push(Placement {
            kind: PlacementKind::Binary {
                id: 0,
                flip_bits: vec![],
            },
            size: -1.0,
            rotation: [0.0; 3],
            translation: [0.0, 0.0, 0.1],
            velocity: [0.0, 0.0, -0.05],
            angular_velocity: [0.0; 3],
            visible: None,
        });
        let v = s.violations();
        assert_eq!(v.len(), 3, "{v:?}");
    }
}
