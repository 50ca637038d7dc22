//! Evaluation of predicted sequences against groundtruth: per-frame image
//! metrics, per-channel population curves, and per-colony statistics.
//!
//! MSE is reported in 0-255 squared units (plus a [0,1]-unit value alongside)
//! so magnitudes are comparable across tools that score 8-bit images.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{hsv_to_rgb, ColorSpace, Frame, Video};

/// Average per-frame MSE reported for the original microscopy test set; a
/// reference point only, not reproducible without the original recordings.
pub const REFERENCE_MICROSCOPY_TEST_MSE: f64 = 13.7;

/// Colony segmentation settings, recorded in every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Foreground if max(red, green) >= this value.
    pub value_threshold: f64,
    /// Components smaller than this are discarded.
    pub min_colony_pixels: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { value_threshold: 0.2, min_colony_pixels: 4 }
    }
}

/// Image metrics for one predicted frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMetrics {
    #[serde(rename = "index")]
    pub frame_index: usize,
    /// Squared-difference mean in 0-255 units.
    pub mse: f64,
    /// The same value in [0,1] units.
    pub mse_unit: f64,
    pub ssim: f64,
}

/// Per-frame `(green_total, red_total)` channel sums.
pub type PopulationCurve = Vec<(f64, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Red,
    Green,
}

/// One connected same-species component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Colony {
    pub species: Species,
    pub pixel_count: usize,
    /// (row, col) mean of member pixels.
    pub centroid: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePair {
    pub gt: PopulationCurve,
    pub pred: PopulationCurve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColonyPair {
    pub gt: Vec<Vec<Colony>>,
    pub pred: Vec<Vec<Colony>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Averages {
    pub mse: f64,
    pub mse_unit: f64,
    pub ssim: f64,
}

/// Full comparison of a predicted sequence against its groundtruth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub well_id: String,
    pub config: EvalConfig,
    pub frames: Vec<FrameMetrics>,
    pub population: CurvePair,
    pub colonies: ColonyPair,
    pub averages: Averages,
}

fn as_rgb(frame: &Frame) -> Result<Frame> {
    match frame.space() {
        ColorSpace::Rgb => Ok(frame.clone()),
        ColorSpace::Hsv => hsv_to_rgb(frame),
    }
}

fn check_same_shape(a: &Frame, b: &Frame) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() || a.space() != b.space() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} {:?} vs {}x{} {:?}",
            a.height(),
            a.width(),
            a.space(),
            b.height(),
            b.width(),
            b.space()
        )));
    }
    Ok(())
}

/// Mean squared difference in [0,1] units over RGB values.
pub fn frame_mse_unit(a: &Frame, b: &Frame) -> Result<f64> {
    check_same_shape(a, b)?;
    let (a, b) = (as_rgb(a)?, as_rgb(b)?);
    let mut acc = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc / a.data().len() as f64)
}

/// Mean squared difference in 0-255 units (what 8-bit image tools report).
pub fn frame_mse(a: &Frame, b: &Frame) -> Result<f64> {
    Ok(frame_mse_unit(a, b)? * 255.0 * 255.0)
}

const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01; // (k1 * L)^2 with L = 1
const SSIM_C2: f64 = 0.03 * 0.03;

/// Structural similarity on luminance (channel mean), averaged over
/// non-overlapping 8x8 windows with population statistics. Frames smaller
/// than one window fall back to a single whole-image window.
pub fn frame_ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_same_shape(a, b)?;
    let (a, b) = (as_rgb(a)?, as_rgb(b)?);
    let (h, w) = (a.height(), a.width());
    let luma = |f: &Frame| -> Vec<f64> {
        f.data().chunks_exact(3).map(|px| (px[0] + px[1] + px[2]) / 3.0).collect()
    };
    let (la, lb) = (luma(&a), luma(&b));

    let (wy, wx) = if h < SSIM_WINDOW || w < SSIM_WINDOW { (h, w) } else { (SSIM_WINDOW, SSIM_WINDOW) };
    let mut total = 0.0;
    let mut windows = 0usize;
    for y0 in (0..=h - wy).step_by(wy.max(1)) {
        for x0 in (0..=w - wx).step_by(wx.max(1)) {
            if y0 + wy > h || x0 + wx > w {
                continue;
            }
            let n = (wy * wx) as f64;
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + wy {
                for x in x0..x0 + wx {
                    let va = la[y * w + x];
                    let vb = lb[y * w + x];
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let var_a = saa / n - ma * ma;
            let var_b = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)
                / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Per-frame sums of the green and red channels; HSV input is converted
/// first. Values are summed in sorted order, so the totals are exactly
/// invariant under pixel permutations (flips, right-angle rotations).
pub fn population_curve(video: &Video) -> Result<PopulationCurve> {
    video
        .frames()
        .iter()
        .map(|frame| {
            let rgb = as_rgb(frame)?;
            let channel_total = |ch: usize| {
                let mut values: Vec<f64> =
                    rgb.data().chunks_exact(3).map(|px| px[ch]).collect();
                values.sort_by(f64::total_cmp);
                values.iter().sum::<f64>()
            };
            Ok((channel_total(1), channel_total(0)))
        })
        .collect()
}

/// Species of a foreground pixel: red wins ties.
fn classify(px: [f64; 3], threshold: f64) -> Option<Species> {
    let (r, g) = (px[0], px[1]);
    if r.max(g) >= threshold {
        Some(if r >= g { Species::Red } else { Species::Green })
    } else {
        None
    }
}

/// Labels 8-connected same-species components with a union-find pass,
/// discarding components below `min_colony_pixels`. Colonies come back
/// sorted by descending size, then row-major centroid.
pub fn label_colonies(
    frame: &Frame,
    value_threshold: f64,
    min_colony_pixels: usize,
) -> Result<Vec<Colony>> {
    let rgb = as_rgb(frame)?;
    let (h, w) = (rgb.height(), rgb.width());
    let species: Vec<Option<Species>> =
        (0..h * w).map(|i| classify(rgb.pixel(i / w, i % w), value_threshold)).collect();

    // union-find over the pixel grid
    let mut parent: Vec<usize> = (0..h * w).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let Some(s) = species[i] else { continue };
            // earlier neighbors under 8-connectivity: W, NW, N, NE
            let neighbors: [(isize, isize); 4] = [(0, -1), (-1, -1), (-1, 0), (-1, 1)];
            for (dr, dc) in neighbors {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nc >= w as isize {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if species[j] == Some(s) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
    }

    let mut stats: std::collections::HashMap<usize, (Species, usize, f64, f64)> =
        std::collections::HashMap::new();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let Some(s) = species[i] else { continue };
            let root = find(&mut parent, i);
            let entry = stats.entry(root).or_insert((s, 0, 0.0, 0.0));
            entry.1 += 1;
            entry.2 += r as f64;
            entry.3 += c as f64;
        }
    }

    let mut colonies: Vec<Colony> = stats
        .into_values()
        .filter(|(_, count, _, _)| *count >= min_colony_pixels)
        .map(|(species, count, rsum, csum)| Colony {
            species,
            pixel_count: count,
            centroid: (rsum / count as f64, csum / count as f64),
        })
        .collect();
    colonies.sort_by(|a, b| {
        b.pixel_count
            .cmp(&a.pixel_count)
            .then(a.centroid.0.total_cmp(&b.centroid.0))
            .then(a.centroid.1.total_cmp(&b.centroid.1))
    });
    Ok(colonies)
}

/// Repeat-last-frame baseline: the naive predictor every model must beat.
pub fn repeat_last_frame(input: &Video, count: usize) -> Result<Video> {
    let last = input.frames().last().ok_or(Error::EmptyVideo)?;
    let mut video = Video::new(vec![last.clone(); count.max(1)])?;
    video.frame_interval_minutes = input.frame_interval_minutes;
    Ok(video)
}

/// Compares two equal-length sequences frame by frame and fills every report
/// field. Frame indices are positions within the compared pair.
pub fn evaluate_well(
    well_id: &str,
    groundtruth: &Video,
    predicted: &Video,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if groundtruth.len() != predicted.len() {
        return Err(Error::ShapeMismatch(format!(
            "groundtruth has {} frames, prediction {}",
            groundtruth.len(),
            predicted.len()
        )));
    }
    let mut frames = Vec::with_capacity(groundtruth.len());
    let mut gt_colonies = Vec::new();
    let mut pred_colonies = Vec::new();
    for (i, (g, p)) in groundtruth.frames().iter().zip(predicted.frames()).enumerate() {
        check_same_shape(g, p)?;
        let mse_unit = frame_mse_unit(g, p)?;
        frames.push(FrameMetrics {
            frame_index: i,
            mse: mse_unit * 255.0 * 255.0,
            mse_unit,
            ssim: frame_ssim(g, p)?,
        });
        gt_colonies.push(label_colonies(g, cfg.value_threshold, cfg.min_colony_pixels)?);
        pred_colonies.push(label_colonies(p, cfg.value_threshold, cfg.min_colony_pixels)?);
    }
    let n = frames.len() as f64;
    let averages = Averages {
        mse: frames.iter().map(|f| f.mse).sum::<f64>() / n,
        mse_unit: frames.iter().map(|f| f.mse_unit).sum::<f64>() / n,
        ssim: frames.iter().map(|f| f.ssim).sum::<f64>() / n,
    };
    Ok(EvalReport {
        well_id: well_id.to_string(),
        config: cfg.clone(),
        frames,
        population: CurvePair {
            gt: population_curve(groundtruth)?,
            pred: population_curve(predicted)?,
        },
        colonies: ColonyPair { gt: gt_colonies, pred: pred_colonies },
        averages,
    })
}

impl EvalReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Flat CSV for plotting: one row per (well, frame, metric).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("well_id,frame,metric,value\n");
        for f in &self.frames {
            let rows: [(&str, f64); 4] = [
                ("mse", f.mse),
                ("mse_unit", f.mse_unit),
                ("ssim", f.ssim),
                ("gt_green", self.population.gt[f.frame_index].0),
            ];
            for (metric, value) in rows {
                out.push_str(&format!("{},{},{},{}\n", self.well_id, f.frame_index, metric, value));
            }
            out.push_str(&format!(
                "{},{},gt_red,{}\n{},{},pred_green,{}\n{},{},pred_red,{}\n{},{},gt_colonies,{}\n{},{},pred_colonies,{}\n",
                self.well_id,
                f.frame_index,
                self.population.gt[f.frame_index].1,
                self.well_id,
                f.frame_index,
                self.population.pred[f.frame_index].0,
                self.well_id,
                f.frame_index,
                self.population.pred[f.frame_index].1,
                self.well_id,
                f.frame_index,
                self.colonies.gt[f.frame_index].len(),
                self.well_id,
                f.frame_index,
                self.colonies.pred[f.frame_index].len(),
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
