//! Image/video data types, RGB<->HSV conversion, and on-disk video I/O.
//!
//! A video on disk is a directory of consecutive `frame_%04d.png` files,
//! 8-bit RGB without alpha. A dataset is a JSON manifest referencing video
//! directories by path relative to the manifest file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel interpretation of a [`Frame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorSpace {
    Rgb,
    Hsv,
}

impl ColorSpace {
    fn name(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::Hsv => "HSV",
        }
    }
}

/// One image: row-major, channel-interleaved, three channels, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
    space: ColorSpace,
}

impl Frame {
    /// Validates bounds on construction; out-of-range data is an error, never
    /// silently clamped.
    pub fn new(height: usize, width: usize, data: Vec<f64>, space: ColorSpace) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::ShapeMismatch(format!(
                "frame {height}x{width} wants {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidFrame(format!("value {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, data, space })
    }

    pub fn zeros(height: usize, width: usize, space: ColorSpace) -> Self {
        Self { height, width, data: vec![0.0; height * width * 3], space }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Pixel accessor: `(row, col)` -> `[c0, c1, c2]`.
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Per-pixel map through a validated constructor.
    pub fn map_pixels(&self, space: ColorSpace, f: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Frame> {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(3) {
            let out = f([px[0], px[1], px[2]]);
            data.extend_from_slice(&out);
        }
        Frame::new(self.height, self.width, data, space)
    }
}

/// Time-ordered sequence of equally shaped frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    frames: Vec<Frame>,
    /// Acquisition cadence; metadata only.
    pub frame_interval_minutes: f64,
}

impl Video {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::EmptyVideo);
        };
        let (h, w, space) = (first.height, first.width, first.space);
        for (i, f) in frames.iter().enumerate() {
            if f.height != h || f.width != w {
                return Err(Error::ShapeMismatch(format!(
                    "frame {i} is {}x{}, expected {h}x{w}",
                    f.height, f.width
                )));
            }
            if f.space != space {
                return Err(Error::WrongColorSpace { expected: space.name(), found: f.space.name() });
            }
        }
        Ok(Self { frames, frame_interval_minutes: 30.0 })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn space(&self) -> ColorSpace {
        self.frames[0].space
    }

    /// Converts every frame with `f`, keeping the interval metadata.
    pub fn map_frames(&self, f: impl Fn(&Frame) -> Result<Frame>) -> Result<Video> {
        let frames: Result<Vec<Frame>> = self.frames.iter().map(f).collect();
        let mut video = Video::new(frames?)?;
        video.frame_interval_minutes = self.frame_interval_minutes;
        Ok(video)
    }
}

/// Dataset split membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    Raw,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Raw => "raw",
        };
        f.write_str(s)
    }
}

/// One well's video with identity, split assignment, and augmentation lineage.
#[derive(Debug, Clone)]
pub struct WellRecord {
    pub well_id: String,
    pub video: Video,
    pub split: Split,
    /// Augmentation-op descriptors; empty for originals.
    pub lineage: Vec<String>,
}

/// Manifest entry referencing a video directory by relative path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub well_id: String,
    /// Relative to the manifest file's directory.
    pub path: String,
    pub split: Split,
    pub lineage: Vec<String>,
}

/// On-disk dataset index: `{schema_version, seed, records}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

impl DatasetManifest {
    pub fn new(seed: u64, records: Vec<ManifestRecord>) -> Self {
        Self { schema_version: MANIFEST_SCHEMA_VERSION, seed, records }
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            if !seen.insert(r.well_id.as_str()) {
                return Err(Error::ConfigError(format!("duplicate well id {}", r.well_id)));
            }
            if r.split == Split::Test && !r.lineage.is_empty() {
                return Err(Error::ConfigError(format!(
                    "test well {} carries augmentation lineage",
                    r.well_id
                )));
            }
        }
        Ok(())
    }

    /// Serializes to pretty JSON; deterministic byte-for-byte.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Loads and checks that every referenced video directory exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        for r in &manifest.records {
            let dir = base.join(&r.path);
            if !dir.is_dir() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("manifest record {} points at missing {}", r.well_id, dir.display()),
                )));
            }
        }
        Ok(manifest)
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

fn frame_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:04}.png"))
}

/// Loads a directory of consecutive `frame_%04d.png` files as an RGB video.
/// Byte value `v` maps to `v/255` exactly.
pub fn load_video(dir: &Path) -> Result<Video> {
    let mut max_index = None;
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_prefix("frame_").and_then(|s| s.strip_suffix(".png")) {
            if let Ok(i) = stem.parse::<usize>() {
                max_index = Some(max_index.map_or(i, |m: usize| m.max(i)));
            }
        }
    }
    let Some(max_index) = max_index else {
        return Err(Error::MissingFrame { dir: dir.to_path_buf(), index: 0 });
    };

    let mut frames = Vec::with_capacity(max_index + 1);
    for i in 0..=max_index {
        let path = frame_file(dir, i);
        if !path.is_file() {
            return Err(Error::MissingFrame { dir: dir.to_path_buf(), index: i });
        }
        let img = image::open(&path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let data: Vec<f64> = rgb.as_raw().iter().map(|b| *b as f64 / 255.0).collect();
        let frame = Frame::new(h, w, data, ColorSpace::Rgb)?;
        if let Some(first) = frames.first() {
            let first: &Frame = first;
            if first.height != h || first.width != w {
                return Err(Error::ShapeMismatch(format!(
                    "frame {i} is {h}x{w}, expected {}x{}",
                    first.height, first.width
                )));
            }
        }
        frames.push(frame);
    }
    Video::new(frames)
}

/// Writes an RGB video as `frame_%04d.png`, rounding half up to 8 bits.
pub fn save_video(video: &Video, dir: &Path) -> Result<()> {
    if video.space() != ColorSpace::Rgb {
        return Err(Error::WrongColorSpace { expected: "RGB", found: video.space().name() });
    }
    std::fs::create_dir_all(dir)?;
    for (i, frame) in video.frames().iter().enumerate() {
        let bytes: Vec<u8> = frame.data().iter().map(|v| (v * 255.0 + 0.5).floor() as u8).collect();
        let img = image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, bytes)
            .expect("buffer length checked by Frame");
        img.save(frame_file(dir, i))
            .map_err(|e| Error::Image(format!("saving frame {i}: {e}")))?;
    }
    Ok(())
}

/// Hexcone RGB -> HSV with all channels in [0, 1] (hue stored as angle/360).
/// Hue is fixed to 0 at zero saturation.
pub fn rgb_to_hsv(frame: &Frame) -> Result<Frame> {
    if frame.space() != ColorSpace::Rgb {
        return Err(Error::WrongColorSpace { expected: "RGB", found: frame.space().name() });
    }
    frame.map_pixels(ColorSpace::Hsv, |[r, g, b]| {
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let delta = max - min;
        let value = max;
        let saturation = if max > 0.0 { delta / max } else { 0.0 };
        let hue = if delta <= 0.0 {
            0.0
        } else if max == r {
            ((g - b) / delta).rem_euclid(6.0) / 6.0
        } else if max == g {
            ((b - r) / delta + 2.0) / 6.0
        } else {
            ((r - g) / delta + 4.0) / 6.0
        };
        [hue, saturation, value]
    })
}

/// Inverse hexcone HSV -> RGB. Accepts hue 1.0 as a wrap of hue 0.
pub fn hsv_to_rgb(frame: &Frame) -> Result<Frame> {
    if frame.space() != ColorSpace::Hsv {
        return Err(Error::WrongColorSpace { expected: "HSV", found: frame.space().name() });
    }
    frame.map_pixels(ColorSpace::Rgb, |[h, s, v]| {
        if s == 0.0 {
            return [v, v, v];
        }
        let h6 = h * 6.0;
        let sextant = (h6.floor() as i64).rem_euclid(6) as u8;
        let f = h6 - h6.floor();
        let p = v * (1.0 - s);
        let q = v * (1.0 - s * f);
        let t = v * (1.0 - s * (1.0 - f));
        match sextant {
            0 => [v, t, p],
            1 => [q, v, p],
            2 => [p, v, t],
            3 => [p, q, v],
            4 => [t, p, v],
            _ => [v, p, q],
        }
    })
}

/// Converts a whole video to HSV.
pub fn video_rgb_to_hsv(video: &Video) -> Result<Video> {
    video.map_frames(rgb_to_hsv)
}

/// Converts a whole video to RGB.
pub fn video_hsv_to_rgb(video: &Video) -> Result<Video> {
    video.map_frames(hsv_to_rgb)
}
