//! Frame sources: raw FTRK video, PNG sequence directories and synthetic
//! scene scripts. All deliver frames in index order at a nominal 30 fps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::imaging::Frame;
use crate::synth::{Renderer, SceneScript, FRAME_INTERVAL_US};

use super::EngineError;

pub const FTRK_MAGIC: &[u8; 4] = b"FTRK";
pub const FTRK_HEADER_LEN: usize = 16;

pub trait FrameSource: Send {
    /// Next frame, or `None` once the stream is exhausted.
    fn next_frame(&mut self) -> Result<Option<Frame>, EngineError>;

    fn dims(&self) -> (u32, u32);

    /// Total frame count when known up front.
    fn len_hint(&self) -> Option<u64> {
        None
    }
}

pub fn timestamp_for(index: u64) -> u64 {
    index * FRAME_INTERVAL_US
}

/// Raw RGB24 video: `"FTRK"`, then little-endian u32 width, height and frame
/// count, then `count` packed frames.
pub struct FtrkReader<R> {
    reader: R,
    width: u32,
    height: u32,
    count: u32,
    next: u32,
}

impl FtrkReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, EngineError> {
        let file = File::open(path).map_err(|e| EngineError::io(path, e))?;
        Self::new(BufReader::new(file))
    }
}

impl<R: Read> FtrkReader<R> {
    pub fn new(mut reader: R) -> Result<Self, EngineError> {
        let mut header = [0u8; FTRK_HEADER_LEN];
        reader
            .read_exact(&mut header)
            .map_err(|_| EngineError::Format("truncated FTRK header".into()))?;
        if &header[0..4] != FTRK_MAGIC {
            return Err(EngineError::Format("missing FTRK magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let (width, height, count) = (word(4), word(8), word(12));
        if width == 0 || height == 0 {
            return Err(EngineError::Format("FTRK frame size must be nonzero".into()));
        }
        Ok(Self {
            reader,
            width,
            height,
            count,
            next: 0,
        })
    }

    pub fn frame_count(&self) -> u32 {
        self.count
    }
}

impl<R: Read + Send> FrameSource for FtrkReader<R> {
    fn next_frame(&mut self) -> Result<Option<Frame>, EngineError> {
        if self.next >= self.count {
            return Ok(None);
        }
        let mut pixels = vec![0u8; self.width as usize * self.height as usize * 3];
        self.reader.read_exact(&mut pixels).map_err(|_| {
            EngineError::Format(format!("FTRK frame {} is truncated", self.next))
        })?;
        let index = self.next as u64;
        self.next += 1;
        Ok(Some(Frame {
            width: self.width,
            height: self.height,
            pixels,
            timestamp_us: timestamp_for(index),
            frame_index: index,
        }))
    }

    fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.count as u64)
    }
}

/// Streams frames into an FTRK file; the header count is patched by `finish`.
pub struct FtrkWriter<W: Write + Seek> {
    writer: W,
    width: u32,
    height: u32,
    count: u32,
}

impl FtrkWriter<BufWriter<File>> {
    pub fn create(path: &Path, width: u32, height: u32) -> Result<Self, EngineError> {
        let file = File::create(path).map_err(|e| EngineError::io(path, e))?;
        Self::new(BufWriter::new(file), width, height)
    }
}

impl<W: Write + Seek> FtrkWriter<W> {
    pub fn new(mut writer: W, width: u32, height: u32) -> Result<Self, EngineError> {
        writer.write_all(&ftrk_header(width, height, 0))?;
        Ok(Self {
            writer,
            width,
            height,
            count: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), EngineError> {
        if frame.dims() != (self.width, self.height) {
            return Err(EngineError::Format(format!(
                "frame is {}x{}, video is {}x{}",
                frame.width, frame.height, self.width, self.height
            )));
        }
        self.writer.write_all(&frame.pixels)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, EngineError> {
        self.writer.seek(SeekFrom::Start(12))?;
        self.writer.write_all(&self.count.to_le_bytes())?;
        self.writer.seek(SeekFrom::End(0))?;
        self.writer.flush()?;
        Ok(self.writer)
    }
}

pub fn ftrk_header(width: u32, height: u32, count: u32) -> [u8; FTRK_HEADER_LEN] {
    let mut h = [0u8; FTRK_HEADER_LEN];
    h[0..4].copy_from_slice(FTRK_MAGIC);
    h[4..8].copy_from_slice(&width.to_le_bytes());
    h[8..12].copy_from_slice(&height.to_le_bytes());
    h[12..16].copy_from_slice(&count.to_le_bytes());
    h
}

/// Every `*.png` in a directory, in file-name order, converted to RGB.
pub struct PngDirSource {
    files: Vec<PathBuf>,
    next: usize,
    dims: (u32, u32),
}

impl PngDirSource {
    pub fn open(dir: &Path) -> Result<Self, EngineError> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| EngineError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
            })
            .collect();
        files.sort();
        let first = files
            .first()
            .ok_or_else(|| EngineError::Format(format!("{} has no PNG files", dir.display())))?;
        let dims = image::image_dimensions(first)
            .map_err(|e| EngineError::Format(format!("{}: {e}", first.display())))?;
        Ok(Self {
            files,
            next: 0,
            dims,
        })
    }
}

impl FrameSource for PngDirSource {
    fn next_frame(&mut self) -> Result<Option<Frame>, EngineError> {
        let Some(path) = self.files.get(self.next) else {
            return Ok(None);
        };
        let img = image::open(path)
            .map_err(|e| EngineError::Format(format!("{}: {e}", path.display())))?
            .into_rgb8();
        if img.dimensions() != self.dims {
            return Err(EngineError::Format(format!(
                "{} is {:?}, sequence is {:?}",
                path.display(),
                img.dimensions(),
                self.dims
            )));
        }
        let index = self.next as u64;
        self.next += 1;
        Ok(Some(Frame {
            width: self.dims.0,
            height: self.dims.1,
            pixels: img.into_raw(),
            timestamp_us: timestamp_for(index),
            frame_index: index,
        }))
    }

    fn dims(&self) -> (u32, u32) {
        self.dims
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.files.len() as u64)
    }
}

pub fn write_png(frame: &Frame, path: &Path) -> Result<(), EngineError> {
    image::save_buffer(
        path,
        &frame.pixels,
        frame.width,
        frame.height,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| EngineError::Format(format!("{}: {e}", path.display())))
}

/// Renders a scene script on demand.
pub struct SyntheticSource {
    renderer: Renderer,
    next: u64,
}

impl SyntheticSource {
    pub fn new(renderer: Renderer) -> Self {
        Self { renderer, next: 0 }
    }

    pub fn open(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
        let script = SceneScript::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::new(Renderer::from_script(script, base)?))
    }

    pub fn renderer(&self) -> &Renderer {
        &self.renderer
    }
}

impl FrameSource for SyntheticSource {
    fn next_frame(&mut self) -> Result<Option<Frame>, EngineError> {
        if self.next >= self.renderer.script().frames {
            return Ok(None);
        }
        let (frame, _) = self.renderer.render(self.next)?;
        self.next += 1;
        Ok(Some(frame))
    }

    fn dims(&self) -> (u32, u32) {
        let k = &self.renderer.script().camera.intrinsics;
        (k.width, k.height)
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.renderer.script().frames)
    }
}

/// In-memory frames, mostly for tests.
pub struct VecSource {
    frames: std::vec::IntoIter<Frame>,
    dims: (u32, u32),
    len: u64,
}

impl VecSource {
    pub fn new(frames: Vec<Frame>) -> Self {
        let dims = frames.first().map_or((0, 0), |f| f.dims());
        let len = frames.len() as u64;
        Self {
            frames: frames.into_iter(),
            dims,
            len,
        }
    }
}

impl FrameSource for VecSource {
    fn next_frame(&mut self) -> Result<Option<Frame>, EngineError> {
        Ok(self.frames.next())
    }

    fn dims(&self) -> (u32, u32) {
        self.dims
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.len)
    }
}

/// Picks the source kind from the path: a directory is a PNG sequence, a
/// `.toml` file a scene script, anything else FTRK video.
pub fn open_source(path: &Path) -> Result<Box<dyn FrameSource>, EngineError> {
    if path.is_dir() {
        return Ok(Box::new(PngDirSource::open(path)?));
    }
    if path.extension().is_some_and(|e| e == "toml") {
        return Ok(Box::new(SyntheticSource::open(path)?));
    }
    Ok(Box::new(FtrkReader::open(path)?))
}

/// Per-pixel, per-channel mean of the next `n` frames, rounded half up.
pub fn capture_background(source: &mut dyn FrameSource, n: u32) -> Result<Frame, EngineError> {
    if n == 0 {
        return Err(EngineError::Config(vec![
            "background.capture_frames: must be >= 1".into(),
        ]));
    }
    let mut acc = BackgroundAccumulator::new(n);
    loop {
        let frame = source.next_frame()?.ok_or(EngineError::SourceExhausted)?;
        if let Some(bg) = acc.push(&frame)? {
            return Ok(bg);
        }
    }
}

/// Running sum for a background capture spread over several frames.
#[derive(Debug, Clone)]
pub struct BackgroundAccumulator {
    needed: u32,
    seen: u32,
    first: Option<Frame>,
    sums: Vec<u32>,
}

impl BackgroundAccumulator {
    pub fn new(frames: u32) -> Self {
        Self {
            needed: frames.max(1),
            seen: 0,
            first: None,
            sums: Vec::new(),
        }
    }

    pub fn remaining(&self) -> u32 {
        self.needed - self.seen
    }

    /// Adds a frame; returns the background once enough frames are in.
    pub fn push(&mut self, frame: &Frame) -> Result<Option<Frame>, EngineError> {
        match &self.first {
            None => {
                self.first = Some(frame.clone());
                self.sums = frame.pixels.iter().map(|&p| p as u32).collect();
            }
            Some(first) => {
                if first.dims() != frame.dims() {
                    return Err(EngineError::Format("frame size changed mid-stream".into()));
                }
                for (s, &p) in self.sums.iter_mut().zip(&frame.pixels) {
                    *s += p as u32;
                }
            }
        }
        self.seen += 1;
        if self.seen < self.needed {
            return Ok(None);
        }
        let mut out = self.first.take().expect("first frame stored");
        let n = self.needed;
        for (dst, &s) in out.pixels.iter_mut().zip(&self.sums) {
            *dst = ((2 * s + n) / (2 * n)) as u8;
        }
        Ok(Some(out))
    }
}
