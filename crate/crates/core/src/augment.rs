//! Spatial augmentation and the train/valid/test split.
//!
//! Augmentation operates on the HSV videos produced by preprocessing. Held
//! out test wells pass through untransformed; every other well emits one
//! record per configured transform, and the expanded pool is shuffled and
//! split by a seeded RNG.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{
    video_hsv_to_rgb, ColorSpace, DatasetManifest, Frame, ManifestRecord, Split, Video, WellRecord,
};

/// Mirror axis for [`apply_flip`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAxis {
    /// Mirror columns: `(r, c) -> (r, W-1-c)`.
    Horizontal,
    /// Mirror rows: `(r, c) -> (H-1-r, c)`.
    Vertical,
}

/// Requested transform families; `multiplicity` must equal the number of
/// distinct combinations: identity + flips + rotations + blur + noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub flips: Vec<FlipAxis>,
    /// Degrees, each in {90, 180, 270}.
    pub rotations: Vec<u32>,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub multiplicity: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flips: vec![FlipAxis::Horizontal, FlipAxis::Vertical],
            rotations: vec![90, 180, 270],
            blur_sigma: 0.5,
            noise_sigma: 0.02,
            multiplicity: 8,
            seed: 0,
        }
    }
}

/// One concrete transform applied to a well.
#[derive(Debug, Clone, PartialEq)]
enum TransformOp {
    Identity,
    Flip(FlipAxis),
    Rotate(u32),
    Blur(f64),
    Noise(f64),
}

impl TransformOp {
    fn descriptor(&self) -> String {
        match self {
            TransformOp::Identity => "identity".into(),
            TransformOp::Flip(FlipAxis::Horizontal) => "hflip".into(),
            TransformOp::Flip(FlipAxis::Vertical) => "vflip".into(),
            TransformOp::Rotate(d) => format!("rot{d}"),
            TransformOp::Blur(s) => format!("blur:{s}"),
            TransformOp::Noise(s) => format!("noise:{s}"),
        }
    }
}

impl AugmentConfig {
    fn combos(&self) -> Result<Vec<TransformOp>> {
        let mut ops = vec![TransformOp::Identity];
        for f in &self.flips {
            ops.push(TransformOp::Flip(*f));
        }
        for r in &self.rotations {
            if ![90, 180, 270].contains(r) {
                return Err(Error::ConfigError(format!("rotation {r} not in {{90, 180, 270}}")));
            }
            ops.push(TransformOp::Rotate(*r));
        }
        if self.blur_sigma < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::ConfigError("sigmas must be >= 0".into()));
        }
        if self.blur_sigma > 0.0 {
            ops.push(TransformOp::Blur(self.blur_sigma));
        }
        if self.noise_sigma > 0.0 {
            ops.push(TransformOp::Noise(self.noise_sigma));
        }
        if ops.len() != self.multiplicity {
            return Err(Error::ConfigError(format!(
                "multiplicity {} does not match the {} requested transform combinations",
                self.multiplicity,
                ops.len()
            )));
        }
        Ok(ops)
    }
}

/// How the expanded pool divides into train and valid, plus the explicit
/// held-out wells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub test_well_ids: Vec<String>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, test_well_ids: vec![] }
    }
}

/// Mirrors every frame; applying the same flip twice is the identity.
pub fn apply_flip(video: &Video, axis: FlipAxis) -> Video {
    let (h, w) = (video.height(), video.width());
    video
        .map_frames(|frame| {
            let src = frame.data();
            let mut data = vec![0.0; src.len()];
            for r in 0..h {
                for c in 0..w {
                    let (sr, sc) = match axis {
                        FlipAxis::Horizontal => (r, w - 1 - c),
                        FlipAxis::Vertical => (h - 1 - r, c),
                    };
                    data[(r * w + c) * 3..(r * w + c) * 3 + 3]
                        .copy_from_slice(&src[(sr * w + sc) * 3..(sr * w + sc) * 3 + 3]);
                }
            }
            Frame::new(h, w, data, frame.space())
        })
        .expect("flip preserves frame validity")
}

/// Exact 90-degree-multiple rotation (pure index permutation). Frames must be
/// square.
pub fn apply_rotation(video: &Video, degrees: u32) -> Result<Video> {
    if ![90, 180, 270].contains(&degrees) {
        return Err(Error::ConfigError(format!("rotation {degrees} not in {{90, 180, 270}}")));
    }
    let (h, w) = (video.height(), video.width());
    if h != w {
        return Err(Error::ShapeMismatch(format!("rotation needs square frames, got {h}x{w}")));
    }
    let n = h;
    video.map_frames(|frame| {
        let src = frame.data();
        let mut data = vec![0.0; src.len()];
        for r in 0..n {
            for c in 0..n {
                // clockwise rotation: source pixel that lands at (r, c)
                let (sr, sc) = match degrees {
                    90 => (n - 1 - c, r),
                    180 => (n - 1 - r, n - 1 - c),
                    _ => (c, n - 1 - r),
                };
                data[(r * n + c) * 3..(r * n + c) * 3 + 3]
                    .copy_from_slice(&src[(sr * n + sc) * 3..(sr * n + sc) * 3 + 3]);
            }
        }
        Frame::new(n, n, data, frame.space())
    })
}

/// Symmetric (edge-inclusive) reflection of an out-of-bounds index.
fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= len {
            i = 2 * len - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Per-frame Gaussian blur, kernel radius `ceil(3 sigma)`, reflective
/// borders, separable passes. `sigma = 0` returns the input bit-identically.
pub fn apply_blur(video: &Video, sigma: f64) -> Result<Video> {
    if sigma < 0.0 {
        return Err(Error::ConfigError("blur sigma must be >= 0".into()));
    }
    if sigma == 0.0 {
        return Ok(video.clone());
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> =
        (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }

    let (h, w) = (video.height(), video.width());
    video.map_frames(|frame| {
        let src = frame.data();
        let mut rows = vec![0.0; src.len()];
        for r in 0..h {
            for c in 0..w {
                for ch in 0..3 {
                    let mut acc = 0.0;
                    for (ki, k) in kernel.iter().enumerate() {
                        let sc = reflect(c as isize + ki as isize - radius, w);
                        acc += k * src[(r * w + sc) * 3 + ch];
                    }
                    rows[(r * w + c) * 3 + ch] = acc;
                }
            }
        }
        let mut data = vec![0.0; src.len()];
        for r in 0..h {
            for c in 0..w {
                for ch in 0..3 {
                    let mut acc = 0.0;
                    for (ki, k) in kernel.iter().enumerate() {
                        let sr = reflect(r as isize + ki as isize - radius, h);
                        acc += k * rows[(sr * w + c) * 3 + ch];
                    }
                    // convex combination of in-range values; clamp only
                    // removes rounding dust beyond the exact bound
                    data[(r * w + c) * 3 + ch] = acc.clamp(0.0, 1.0);
                }
            }
        }
        Frame::new(h, w, data, frame.space())
    })
}

/// Adds i.i.d. N(0, sigma^2) per element, clamped to [0, 1]. Seeded RNG makes
/// the output reproducible; `sigma = 0` returns the input without consuming
/// randomness.
pub fn apply_noise<R: Rng>(video: &Video, sigma: f64, rng: &mut R) -> Result<Video> {
    if sigma < 0.0 {
        return Err(Error::ConfigError("noise sigma must be >= 0".into()));
    }
    if sigma == 0.0 {
        return Ok(video.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::ConfigError(e.to_string()))?;
    let (h, w) = (video.height(), video.width());
    let mut frames = Vec::with_capacity(video.len());
    for frame in video.frames() {
        let data: Vec<f64> =
            frame.data().iter().map(|v| (v + normal.sample(rng)).clamp(0.0, 1.0)).collect();
        frames.push(Frame::new(h, w, data, frame.space())?);
    }
    let mut out = Video::new(frames)?;
    out.frame_interval_minutes = video.frame_interval_minutes;
    Ok(out)
}

fn apply_op(video: &Video, op: &TransformOp, rng: &mut ChaCha8Rng) -> Result<Video> {
    match op {
        TransformOp::Identity => Ok(video.clone()),
        TransformOp::Flip(axis) => Ok(apply_flip(video, *axis)),
        TransformOp::Rotate(d) => apply_rotation(video, *d),
        TransformOp::Blur(s) => apply_blur(video, *s),
        TransformOp::Noise(s) => apply_noise(video, *s, rng),
    }
}

/// Expands non-test wells by the configured transforms and assigns splits.
///
/// Test wells pass through untransformed with `split = test`. The expanded
/// pool is shuffled with the augment seed and divided `train_fraction` /
/// remainder, the odd record going to train. Output order: shuffled
/// train+valid, then test wells in input order.
pub fn expand_records(
    records: &[WellRecord],
    aug: &AugmentConfig,
    split: &SplitSpec,
) -> Result<Vec<WellRecord>> {
    let ops = aug.combos()?;
    if !(0.0..1.0).contains(&split.train_fraction) || split.train_fraction == 0.0 {
        return Err(Error::ConfigError(format!(
            "train_fraction {} outside (0, 1)",
            split.train_fraction
        )));
    }
    let ids: std::collections::HashSet<&str> = records.iter().map(|r| r.well_id.as_str()).collect();
    for t in &split.test_well_ids {
        if !ids.contains(t.as_str()) {
            return Err(Error::UnknownWell(t.clone()));
        }
    }
    if let Some(first) = records.first() {
        for r in records {
            let (a, b) = (&first.video, &r.video);
            if (a.height(), a.width(), a.len(), a.space())
                != (b.height(), b.width(), b.len(), b.space())
            {
                return Err(Error::ShapeMismatch(format!(
                    "record {} does not match the common video shape",
                    r.well_id
                )));
            }
        }
    }

    let is_test = |id: &str| split.test_well_ids.iter().any(|t| t == id);
    let sources: Vec<(usize, &WellRecord)> =
        records.iter().enumerate().filter(|(_, r)| !is_test(&r.well_id)).collect();

    // one RNG stream per (source, combo) pair keeps parallel expansion
    // deterministic for any worker count
    let mut expanded: Vec<WellRecord> = sources
        .par_iter()
        .flat_map_iter(|(src_idx, record)| {
            let ops = &ops;
            ops.iter().enumerate().map(move |(k, op)| {
                let mut rng = ChaCha8Rng::seed_from_u64(aug.seed);
                rng.set_stream(((*src_idx as u64) << 8) | k as u64);
                let video = apply_op(&record.video, op, &mut rng)?;
                Ok(WellRecord {
                    well_id: format!("{}.{k:02}", record.well_id),
                    video,
                    split: Split::Train, // reassigned below
                    lineage: vec![op.descriptor()],
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(aug.seed);
    expanded.shuffle(&mut rng);
    let n_train = (split.train_fraction * expanded.len() as f64).ceil() as usize;
    for (i, r) in expanded.iter_mut().enumerate() {
        r.split = if i < n_train { Split::Train } else { Split::Valid };
    }

    for record in records.iter().filter(|r| is_test(&r.well_id)) {
        expanded.push(WellRecord {
            well_id: record.well_id.clone(),
            video: record.video.clone(),
            split: Split::Test,
            lineage: vec![],
        });
    }
    Ok(expanded)
}

/// [`expand_records`] plus persistence: writes each video under
/// `out_dir/<well_id>/` (converting HSV to RGB for storage) and returns the
/// manifest, which is also written to `out_dir/manifest.json`.
pub fn expand_dataset(
    records: &[WellRecord],
    aug: &AugmentConfig,
    split: &SplitSpec,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let expanded = expand_records(records, aug, split)?;
    std::fs::create_dir_all(out_dir)?;
    expanded.par_iter().try_for_each(|r| -> Result<()> {
        let rgb = match r.video.space() {
            ColorSpace::Hsv => video_hsv_to_rgb(&r.video)?,
            ColorSpace::Rgb => r.video.clone(),
        };
        crate::video::save_video(&rgb, &out_dir.join(&r.well_id))
    })?;
    let manifest = DatasetManifest::new(
        aug.seed,
        expanded
            .iter()
            .map(|r| ManifestRecord {
                well_id: r.well_id.clone(),
                path: r.well_id.clone(),
                split: r.split,
                lineage: r.lineage.clone(),
            })
            .collect(),
    );
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video_with_pixel(h: usize, w: usize, r: usize, c: usize) -> Video {
        let mut data = vec![0.0; h * w * 3];
        data[(r * w + c) * 3] = 1.0;
        let frame = Frame::new(h, w, data, ColorSpace::Hsv).unwrap();
        Video::new(vec![frame]).unwrap()
    }

    fn random_video(frames: usize, h: usize, w: usize, seed: u64) -> Video {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs: Vec<Frame> = (0..frames)
            .map(|_| {
                let data = (0..h * w * 3).map(|_| rng.random_range(0.0..=1.0)).collect();
                Frame::new(h, w, data, ColorSpace::Hsv).unwrap()
            })
            .collect();
        Video::new(fs).unwrap()
    }

    /// Per-channel sums in a canonical (sorted) order, so that a pure pixel
    /// permutation yields bit-identical results.
    fn channel_sums(video: &Video) -> Vec<[f64; 3]> {
        video
            .frames()
            .iter()
            .map(|f| {
                let mut s = [0.0; 3];
                for (ch, sv) in s.iter_mut().enumerate() {
                    let mut vals: Vec<f64> =
                        f.data().chunks_exact(3).map(|px| px[ch]).collect();
                    vals.sort_by(f64::total_cmp);
                    *sv = vals.iter().sum();
                }
                s
            })
            .collect()
    }

    #[test]
    fn flip_twice_is_identity() {
        let video = random_video(3, 5, 7, 1);
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let twice = apply_flip(&apply_flip(&video, axis), axis);
            for (a, b) in video.frames().iter().zip(twice.frames()) {
                assert_eq!(a.data(), b.data());
            }
        }
    }

    #[test]
    fn horizontal_flip_maps_coordinates() {
        let video = video_with_pixel(4, 6, 1, 2);
        let flipped = apply_flip(&video, FlipAxis::Horizontal);
        assert_eq!(flipped.frames()[0].pixel(1, 6 - 1 - 2)[0], 1.0);
        let vflipped = apply_flip(&video, FlipAxis::Vertical);
        assert_eq!(vflipped.frames()[0].pixel(4 - 1 - 1, 2)[0], 1.0);
    }

    #[test]
    fn flip_preserves_channel_sums_exactly() {
        let video = random_video(2, 6, 6, 2);
        assert_eq!(channel_sums(&video), channel_sums(&apply_flip(&video, FlipAxis::Horizontal)));
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let video = random_video(2, 5, 5, 3);
        let mut turned = video.clone();
        for _ in 0..4 {
            turned = apply_rotation(&turned, 90).unwrap();
        }
        for (a, b) in video.frames().iter().zip(turned.frames()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn half_turn_equals_both_flips() {
        let video = random_video(2, 5, 5, 4);
        let rotated = apply_rotation(&video, 180).unwrap();
        let flipped = apply_flip(&apply_flip(&video, FlipAxis::Horizontal), FlipAxis::Vertical);
        for (a, b) in rotated.frames().iter().zip(flipped.frames()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn rotation_preserves_channel_sums_and_needs_square() {
        let video = random_video(2, 5, 5, 5);
        for d in [90, 180, 270] {
            assert_eq!(channel_sums(&video), channel_sums(&apply_rotation(&video, d).unwrap()));
        }
        let rect = random_video(1, 4, 5, 6);
        assert!(matches!(apply_rotation(&rect, 90), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_sigma_blur_is_bit_identical() {
        let video = random_video(2, 6, 6, 7);
        let out = apply_blur(&video, 0.0).unwrap();
        for (a, b) in video.frames().iter().zip(out.frames()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn blur_keeps_constant_images_constant() {
        let frame = Frame::new(8, 8, vec![0.6; 8 * 8 * 3], ColorSpace::Hsv).unwrap();
        let video = Video::new(vec![frame]).unwrap();
        let out = apply_blur(&video, 1.0).unwrap();
        for v in out.frames()[0].data() {
            assert!((v - 0.6).abs() < 1e-9);
        }
    }

    #[test]
    fn impulse_center_matches_direct_kernel_evaluation() {
        // 2-D kernel oracle: normalized Gaussian evaluated by direct summation
        let sigma = 1.0;
        let radius = 3i32;
        let mut total = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                total += (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
            }
        }
        let center_weight = 1.0 / total;

        let mut data = vec![0.0; 11 * 11 * 3];
        data[(5 * 11 + 5) * 3] = 1.0;
        let video =
            Video::new(vec![Frame::new(11, 11, data, ColorSpace::Hsv).unwrap()]).unwrap();
        let out = apply_blur(&video, sigma).unwrap();
        let got = out.frames()[0].pixel(5, 5)[0];
        assert!((got - center_weight).abs() < 1e-9, "got {got}, expect {center_weight}");
    }

    #[test]
    fn blur_preserves_channel_sums_within_tolerance() {
        let video = random_video(1, 10, 10, 8);
        let before = channel_sums(&video);
        let after = channel_sums(&apply_blur(&video, 0.8).unwrap());
        for (a, b) in before.iter().zip(&after) {
            for ch in 0..3 {
                assert!((a[ch] - b[ch]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let video = random_video(2, 6, 6, 9);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            apply_noise(&video, 0.05, &mut rng).unwrap()
        };
        let (a, b) = (run(5), run(5));
        for (fa, fb) in a.frames().iter().zip(b.frames()) {
            assert_eq!(fa.data(), fb.data());
        }
        let zero = apply_noise(&video, 0.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for (fa, fb) in video.frames().iter().zip(zero.frames()) {
            assert_eq!(fa.data(), fb.data());
        }
    }

    #[test]
    fn noise_sample_mean_stays_near_input_mean() {
        let frame = Frame::new(16, 16, vec![0.5; 16 * 16 * 3], ColorSpace::Hsv).unwrap();
        let video = Video::new(vec![frame.clone(), frame]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sigma = 0.05;
        let out = apply_noise(&video, sigma, &mut rng).unwrap();
        let n = (video.len() * 16 * 16 * 3) as f64;
        let mean: f64 =
            out.frames().iter().flat_map(|f| f.data()).sum::<f64>() / n;
        assert!((mean - 0.5).abs() < 3.0 * sigma / n.sqrt(), "mean {mean}");
    }

    fn make_records(n: usize, test: &[usize]) -> (Vec<WellRecord>, SplitSpec) {
        let records: Vec<WellRecord> = (0..n)
            .map(|i| WellRecord {
                well_id: format!("well_{i:03}"),
                video: random_video(2, 4, 4, i as u64),
                split: Split::Raw,
                lineage: vec![],
            })
            .collect();
        let spec = SplitSpec {
            train_fraction: 0.8,
            test_well_ids: test.iter().map(|i| format!("well_{i:03}")).collect(),
        };
        (records, spec)
    }

    #[test]
    fn expansion_counts_match_split_arithmetic() {
        // 48 wells, 4 held out, multiplicity 8 -> 352 augmented, 282/70
        let (records, spec) = make_records(48, &[3, 11, 27, 40]);
        let aug = AugmentConfig::default();
        let out = expand_records(&records, &aug, &spec).unwrap();
        let count = |s: Split| out.iter().filter(|r| r.split == s).count();
        assert_eq!(out.len(), 352 + 4);
        assert_eq!(count(Split::Train), 282);
        assert_eq!(count(Split::Valid), 70);
        assert_eq!(count(Split::Test), 4);
    }

    #[test]
    fn identity_only_expansion_keeps_counts() {
        let (records, spec) = make_records(5, &[]);
        let aug = AugmentConfig {
            flips: vec![],
            rotations: vec![],
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            multiplicity: 1,
            seed: 9,
        };
        let out = expand_records(&records, &aug, &spec).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|r| r.lineage == vec!["identity".to_string()]));
    }

    #[test]
    fn split_is_deterministic_under_fixed_seed() {
        let (records, spec) = make_records(10, &[2]);
        let aug = AugmentConfig::default();
        let a = expand_records(&records, &aug, &spec).unwrap();
        let b = expand_records(&records, &aug, &spec).unwrap();
        let ids = |v: &[WellRecord]| -> Vec<(String, Split)> {
            v.iter().map(|r| (r.well_id.clone(), r.split)).collect()
        };
        assert_eq!(ids(&a), ids(&b));
        for (ra, rb) in a.iter().zip(&b) {
            for (fa, fb) in ra.video.frames().iter().zip(rb.video.frames()) {
                assert_eq!(fa.data(), fb.data());
            }
        }
    }

    #[test]
    fn unknown_test_well_is_rejected() {
        let (records, mut spec) = make_records(4, &[]);
        spec.test_well_ids.push("nope".into());
        assert!(matches!(
            expand_records(&records, &AugmentConfig::default(), &spec),
            Err(Error::UnknownWell(_))
        ));
    }

    #[test]
    fn no_test_descendant_exists_anywhere() {
        let (records, spec) = make_records(12, &[0, 5]);
        let out = expand_records(&records, &AugmentConfig::default(), &spec).unwrap();
        for r in &out {
            let source = r.well_id.split('.').next().unwrap();
            let from_test = spec.test_well_ids.iter().any(|t| t == source);
            if from_test {
                assert_eq!(r.split, Split::Test);
                assert!(r.lineage.is_empty());
                assert_eq!(r.well_id, source, "augmented descendant of a test well");
            } else {
                assert_ne!(r.split, Split::Test);
            }
        }
    }

    #[test]
    fn mismatched_multiplicity_is_rejected() {
        let (records, spec) = make_records(3, &[]);
        let aug = AugmentConfig { multiplicity: 5, ..AugmentConfig::default() };
        assert!(matches!(
            expand_records(&records, &aug, &spec),
            Err(Error::ConfigError(_))
        ));
    }

    #[test]
    fn augmented_videos_stay_in_unit_range() {
        let (records, spec) = make_records(2, &[]);
        let aug = AugmentConfig { noise_sigma: 0.5, ..AugmentConfig::default() };
        let out = expand_records(&records, &aug, &spec).unwrap();
        for r in out {
            for f in r.video.frames() {
                assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
