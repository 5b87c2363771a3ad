//! Monitoring messages for the control API's server-push channel.

use base64::Engine as _;
use fidtrack_core::engine::FrameOverlay;
use fidtrack_core::imaging::Frame;
use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use serde::Serialize;

const JPEG_QUALITY: u8 = 70;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreviewImage {
    /// `"jpeg"`, or `"rgb"` for raw RGB24 when encoding failed.
    pub format: &'static str,
    pub width: u32,
    pub height: u32,
    /// Base64 of the encoded image.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassOverlay {
    pub class_id: u32,
    /// `[min_x, min_y, max_x, max_y]`, inclusive frame pixels.
    pub bbox: [u32; 4],
    pub centroid: [f64; 2],
    pub smoothed_centroid: [f64; 2],
    pub pixel_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkerOverlay {
    pub id: u32,
    /// TL, TR, BR, BL in frame pixels.
    pub corners: [[f64; 2]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectRate {
    pub object_id: u32,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreviewMessage {
    pub frame_index: u64,
    pub preview: PreviewImage,
    pub masses: Vec<MassOverlay>,
    pub markers: Vec<MarkerOverlay>,
    pub rates: Vec<ObjectRate>,
}

pub fn encode_preview(frame: &Frame) -> PreviewImage {
    let mut jpeg = Vec::new();
    let encoded = JpegEncoder::new_with_quality(&mut jpeg, JPEG_QUALITY).encode(
        &frame.pixels,
        frame.width,
        frame.height,
        ExtendedColorType::Rgb8,
    );
    let (format, bytes) = match encoded {
        Ok(()) => ("jpeg", jpeg.as_slice()),
        Err(e) => {
            log::warn!("preview jpeg encoding failed: {e}");
            ("rgb", frame.pixels.as_slice())
        }
    };
    PreviewImage {
        format,
        width: frame.width,
        height: frame.height,
        data: base64::engine::general_purpose::STANDARD.encode(bytes),
    }
}

pub fn preview_message(frame: &Frame, overlay: &FrameOverlay, rates: &[(u32, f64)]) -> PreviewMessage {
    PreviewMessage {
        frame_index: overlay.frame_index,
        preview: encode_preview(frame),
        masses: overlay
            .masses
            .iter()
            .map(|m| MassOverlay {
                class_id: m.class_id,
                bbox: [m.bbox.min_x, m.bbox.min_y, m.bbox.max_x, m.bbox.max_y],
                centroid: [m.centroid.x, m.centroid.y],
                smoothed_centroid: [m.smoothed_centroid.x, m.smoothed_centroid.y],
                pixel_count: m.pixel_count,
            })
            .collect(),
        markers: overlay
            .markers
            .iter()
            .map(|m| MarkerOverlay {
                id: m.id,
                corners: m.corners.map(|c| [c.x, c.y]),
            })
            .collect(),
        rates: rates.iter().map(|&(object_id, rate)| ObjectRate { object_id, rate }).collect(),
    }
}
