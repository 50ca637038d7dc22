//! Well centering and sequence expansion.
//!
//! Raw wells are located by triangle-thresholding the temporal mean image,
//! cropped to a fixed window, trimmed to the dynamic leading frames, and
//! expanded to the training geometry by linear interpolation in time followed
//! by bilinear resampling in space, ending in HSV.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{rgb_to_hsv, ColorSpace, Frame, Video, WellRecord};

/// Inclusive pixel bounds of a located well.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl BoundingBox {
    /// Box center in continuous pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.row_min + self.row_max) as f64 / 2.0,
            (self.col_min + self.col_max) as f64 / 2.0,
        )
    }
}

/// Geometry of the preprocessing stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Leading frames kept from the raw video (the dynamic growth phase).
    pub keep_frames: usize,
    /// Output sequence length after temporal interpolation.
    pub target_frames: usize,
    /// Square crop side around the located well center.
    pub crop_size: usize,
    /// Square output side after bilinear resampling.
    pub target_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { keep_frames: 7, target_frames: 20, crop_size: 24, target_size: 32 }
    }
}

impl PreprocessConfig {
    fn validate(&self) -> Result<()> {
        if self.keep_frames < 2 {
            return Err(Error::ConfigError("keep_frames must be >= 2".into()));
        }
        if self.target_frames < self.keep_frames {
            return Err(Error::ConfigError("target_frames must be >= keep_frames".into()));
        }
        if self.crop_size == 0 || self.target_size == 0 {
            return Err(Error::ConfigError("sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Triangle threshold over a 256-bin histogram: the bin between the peak and
/// the farthest populated tail with maximum perpendicular distance to the
/// peak-tail line. Ties break toward the peak.
pub fn triangle_threshold(histogram: &[u64; 256]) -> Result<usize> {
    let nonzero: Vec<usize> = (0..256).filter(|i| histogram[*i] > 0).collect();
    if nonzero.len() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    // peak: lowest bin among maxima; tail: populated bin farthest from it
    let peak = (0..256)
        .max_by_key(|i| (histogram[*i], std::cmp::Reverse(*i)))
        .expect("histogram has 256 bins");
    let tail = *nonzero
        .iter()
        .max_by_key(|i| (peak.abs_diff(**i), **i))
        .expect("at least two non-zero bins");

    let (px, py) = (peak as f64, histogram[peak] as f64);
    let (tx, ty) = (tail as f64, histogram[tail] as f64);
    let norm = ((ty - py).powi(2) + (tx - px).powi(2)).sqrt();

    let range: Vec<usize> = if peak <= tail {
        (peak..=tail).collect()
    } else {
        (tail..=peak).rev().collect()
    };
    let mut best = peak;
    let mut best_dist = f64::NEG_INFINITY;
    // iteration starts at the peak, so strict improvement == tie toward peak
    for b in range {
        let (bx, by) = (b as f64, histogram[b] as f64);
        let dist = ((ty - py) * bx - (tx - px) * by + tx * py - ty * px).abs() / norm;
        if dist > best_dist {
            best_dist = dist;
            best = b;
        }
    }
    Ok(best)
}

/// Temporal mean of per-pixel luminance (unweighted channel mean), in [0, 1].
fn temporal_mean_luminance(video: &Video) -> Vec<f64> {
    let (h, w) = (video.height(), video.width());
    let mut mean = vec![0.0; h * w];
    for frame in video.frames() {
        for (m, px) in mean.iter_mut().zip(frame.data().chunks_exact(3)) {
            *m += (px[0] + px[1] + px[2]) / 3.0;
        }
    }
    let n = video.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    mean
}

fn luminance_bin(v: f64) -> usize {
    ((v * 255.0 + 0.5).floor() as usize).min(255)
}

/// Finds the tight bounding box of above-threshold pixels in the temporal
/// mean image. A flat histogram (all pixels in one bin) keeps every pixel.
pub fn locate_well(video: &Video) -> Result<BoundingBox> {
    if video.space() != ColorSpace::Rgb {
        return Err(Error::WrongColorSpace { expected: "RGB", found: "HSV" });
    }
    let (h, w) = (video.height(), video.width());
    let mean = temporal_mean_luminance(video);
    let mut histogram = [0u64; 256];
    for m in &mean {
        histogram[luminance_bin(*m)] += 1;
    }
    let threshold = match triangle_threshold(&histogram) {
        Ok(t) => Some(t),
        // uniform image: every pixel counts as brightest
        Err(Error::DegenerateHistogram) => None,
        Err(e) => return Err(e),
    };

    let mut bbox: Option<BoundingBox> = None;
    for r in 0..h {
        for c in 0..w {
            let above = match threshold {
                Some(t) => luminance_bin(mean[r * w + c]) > t,
                None => true,
            };
            if above {
                let b = bbox.get_or_insert(BoundingBox {
                    row_min: r,
                    row_max: r,
                    col_min: c,
                    col_max: c,
                });
                b.row_min = b.row_min.min(r);
                b.row_max = b.row_max.max(r);
                b.col_min = b.col_min.min(c);
                b.col_max = b.col_max.max(c);
            }
        }
    }
    bbox.ok_or(Error::EmptyWell)
}

/// Crops a `crop_size` square window centered on the box center, clamped to
/// stay in bounds (content near edges shifts rather than pads).
pub fn center_crop(video: &Video, bbox: &BoundingBox, crop_size: usize) -> Result<Video> {
    let (h, w) = (video.height(), video.width());
    if crop_size > h || crop_size > w {
        return Err(Error::CropTooLarge { crop: crop_size, height: h, width: w });
    }
    let (cr, cc) = bbox.center();
    let half = (crop_size as f64 - 1.0) / 2.0;
    let clamp_start = |center: f64, limit: usize| -> usize {
        let ideal = (center - half).round() as isize;
        ideal.clamp(0, (limit - crop_size) as isize) as usize
    };
    let r0 = clamp_start(cr, h);
    let c0 = clamp_start(cc, w);

    video.map_frames(|frame| {
        let mut data = Vec::with_capacity(crop_size * crop_size * 3);
        for r in r0..r0 + crop_size {
            let row = &frame.data()[(r * w + c0) * 3..(r * w + c0 + crop_size) * 3];
            data.extend_from_slice(row);
        }
        Frame::new(crop_size, crop_size, data, frame.space())
    })
}

/// Resamples the sequence to `target_frames` by per-pixel linear blending at
/// uniform times over [first, last]. Endpoints are bit-exact copies; integral
/// sample times copy their frame directly.
pub fn interpolate_time(video: &Video, target_frames: usize) -> Result<Video> {
    let n = video.len();
    if n < 2 {
        return Err(Error::TooFewFrames { needed: 2, got: n });
    }
    if target_frames < 2 {
        return Err(Error::TooFewFrames { needed: 2, got: target_frames });
    }
    let frames = video.frames();
    let mut out = Vec::with_capacity(target_frames);
    for k in 0..target_frames {
        let t = k as f64 * (n - 1) as f64 / (target_frames - 1) as f64;
        let i0 = (t.floor() as usize).min(n - 1);
        let weight = t - i0 as f64;
        if weight == 0.0 {
            out.push(frames[i0].clone());
            continue;
        }
        let (a, b) = (&frames[i0], &frames[i0 + 1]);
        let data: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x + weight * (y - x))
            .collect();
        out.push(Frame::new(a.height(), a.width(), data, a.space())?);
    }
    let mut video_out = Video::new(out)?;
    video_out.frame_interval_minutes = video.frame_interval_minutes;
    Ok(video_out)
}

/// Bilinear resampling with half-pixel-centered coordinates. Each output
/// value is clamped to the envelope of its four source samples, so constant
/// images stay constant exactly and the output range never leaves the input
/// range.
pub fn resize_bilinear(frame: &Frame, target_size: usize) -> Result<Frame> {
    if target_size == 0 {
        return Err(Error::ConfigError("target size must be positive".into()));
    }
    let (h, w) = (frame.height(), frame.width());
    let (th, tw) = (target_size, target_size);
    let src_coord = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let c = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
            .clamp(0.0, (src_len - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, c - i0 as f64)
    };
    let mut data = Vec::with_capacity(th * tw * 3);
    for ty in 0..th {
        let (y0, y1, wy) = src_coord(ty, h, th);
        for tx in 0..tw {
            let (x0, x1, wx) = src_coord(tx, w, tw);
            for ch in 0..3 {
                let v00 = frame.data()[(y0 * w + x0) * 3 + ch];
                let v01 = frame.data()[(y0 * w + x1) * 3 + ch];
                let v10 = frame.data()[(y1 * w + x0) * 3 + ch];
                let v11 = frame.data()[(y1 * w + x1) * 3 + ch];
                let top = v00 + wx * (v01 - v00);
                let bottom = v10 + wx * (v11 - v10);
                let v = top + wy * (bottom - top);
                let lo = v00.min(v01).min(v10).min(v11);
                let hi = v00.max(v01).max(v10).max(v11);
                data.push(v.clamp(lo, hi));
            }
        }
    }
    Frame::new(th, tw, data, frame.space())
}

/// Full preprocessing of one raw well: trim to the leading `keep_frames`,
/// locate and center the well, expand to `target_frames` x `target_size`^2,
/// and convert to HSV.
pub fn preprocess_well(record: &WellRecord, cfg: &PreprocessConfig) -> Result<WellRecord> {
    cfg.validate()?;
    let video = &record.video;
    if video.len() < cfg.keep_frames {
        return Err(Error::TooFewFrames { needed: cfg.keep_frames, got: video.len() });
    }
    let mut trimmed = Video::new(video.frames()[..cfg.keep_frames].to_vec())?;
    trimmed.frame_interval_minutes = video.frame_interval_minutes;

    let bbox = locate_well(&trimmed)?;
    let cropped = center_crop(&trimmed, &bbox, cfg.crop_size)?;
    let expanded = interpolate_time(&cropped, cfg.target_frames)?;
    let resized = expanded.map_frames(|f| resize_bilinear(f, cfg.target_size))?;
    let hsv = resized.map_frames(rgb_to_hsv)?;

    Ok(WellRecord {
        well_id: record.well_id.clone(),
        video: hsv,
        split: record.split,
        lineage: record.lineage.clone(),
    })
}
