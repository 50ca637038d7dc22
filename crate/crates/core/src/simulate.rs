//! Synthetic microwell videos: two fluorescent species grow from seed
//! colonies by stochastic dilation with logistic damping, optionally with
//! contact killing, and render as red/green fluorescence frames with known
//! per-pixel ground truth.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Species;
use crate::video::{ColorSpace, DatasetManifest, Frame, ManifestRecord, Split, Video};

/// Growth-simulation parameters for one well.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub image_size: usize,
    pub frames: usize,
    pub well_radius: f64,
    pub seeds_red: usize,
    pub seeds_green: usize,
    /// Per-frame dilation probability before logistic damping.
    pub growth_rate: f64,
    /// Maximum occupied fraction of the well disk.
    pub carrying_capacity: f64,
    /// Probability that a red pixel bordering green dies, per frame.
    pub kill_strength: f64,
    /// When set, red kills green at the same strength (both mutants
    /// susceptible); default is the one-directional simplification.
    pub symmetric_kill: bool,
    /// Texture noise on rendered intensities.
    pub noise_sigma: f64,
    pub rng_seed: u64,
    /// Biases seed sizes: 0.5 is balanced, values toward 1 favor red.
    pub red_green_balance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            image_size: 24,
            frames: 14,
            well_radius: 10.0,
            seeds_red: 2,
            seeds_green: 2,
            growth_rate: 2.0,
            carrying_capacity: 0.95,
            kill_strength: 0.15,
            symmetric_kill: false,
            noise_sigma: 0.03,
            rng_seed: 0,
            red_green_balance: 0.5,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.seeds_red == 0 && self.seeds_green == 0 {
            return Err(Error::ConfigError("at least one seed colony required".into()));
        }
        if self.growth_rate < 0.0 {
            return Err(Error::ConfigError("growth_rate must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.carrying_capacity) || self.carrying_capacity == 0.0 {
            return Err(Error::ConfigError("carrying_capacity must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.kill_strength) {
            return Err(Error::ConfigError("kill_strength must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.red_green_balance) {
            return Err(Error::ConfigError("red_green_balance must be in [0, 1]".into()));
        }
        if self.frames == 0 || self.image_size == 0 {
            return Err(Error::ConfigError("frames and image_size must be positive".into()));
        }
        let center = (self.image_size as f64 - 1.0) / 2.0;
        if self.well_radius <= 0.0 || self.well_radius > center + 0.5 {
            return Err(Error::ConfigError(format!(
                "well radius {} does not fit a {} px image",
                self.well_radius, self.image_size
            )));
        }
        Ok(())
    }
}

/// A seeded starting colony.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedColony {
    pub species: Species,
    pub center: (f64, f64),
    pub radius: f64,
}

/// Per-frame occupancy of one species as (row, col) pixel lists.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FrameOccupancy {
    pub red: Vec<(u16, u16)>,
    pub green: Vec<(u16, u16)>,
}

/// Exact simulation state per frame, stored alongside rendered videos.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimTruth {
    pub well_center: (f64, f64),
    pub well_radius: f64,
    pub seeds: Vec<SeedColony>,
    pub occupancy: Vec<FrameOccupancy>,
}

impl SimTruth {
    /// (red, green) occupied pixel counts at one frame.
    pub fn counts(&self, frame: usize) -> (usize, usize) {
        (self.occupancy[frame].red.len(), self.occupancy[frame].green.len())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

struct Grid {
    size: usize,
    cells: Vec<Option<Species>>,
    in_well: Vec<bool>,
    well_pixels: usize,
}

impl Grid {
    fn new(size: usize, center: (f64, f64), radius: f64) -> Self {
        let mut in_well = vec![false; size * size];
        let mut well_pixels = 0;
        for r in 0..size {
            for c in 0..size {
                let dr = r as f64 - center.0;
                let dc = c as f64 - center.1;
                if (dr * dr + dc * dc).sqrt() <= radius {
                    in_well[r * size + c] = true;
                    well_pixels += 1;
                }
            }
        }
        Self { size, cells: vec![None; size * size], in_well, well_pixels }
    }

    fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    fn neighbors8(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = (i / self.size, i % self.size);
        let size = self.size;
        (-1isize..=1).flat_map(move |dr| (-1isize..=1).map(move |dc| (dr, dc))).filter_map(
            move |(dr, dc)| {
                if dr == 0 && dc == 0 {
                    return None;
                }
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= size as isize || nc >= size as isize {
                    None
                } else {
                    Some(nr as usize * size + nc as usize)
                }
            },
        )
    }

    fn snapshot(&self) -> FrameOccupancy {
        let mut occ = FrameOccupancy::default();
        for (i, cell) in self.cells.iter().enumerate() {
            let (r, c) = ((i / self.size) as u16, (i % self.size) as u16);
            match cell {
                Some(Species::Red) => occ.red.push((r, c)),
                Some(Species::Green) => occ.green.push((r, c)),
                None => {}
            }
        }
        occ
    }
}

fn stamp_seed(grid: &mut Grid, seed: &SeedColony) {
    let size = grid.size;
    for r in 0..size {
        for c in 0..size {
            let i = r * size + c;
            if !grid.in_well[i] || grid.cells[i].is_some() {
                continue;
            }
            let dr = r as f64 - seed.center.0;
            let dc = c as f64 - seed.center.1;
            if (dr * dr + dc * dc).sqrt() <= seed.radius {
                grid.cells[i] = Some(seed.species);
            }
        }
    }
    // a seed always claims at least its center pixel if free
    let (r, c) = (seed.center.0.round() as usize, seed.center.1.round() as usize);
    let i = r * size + c;
    if grid.in_well[i] && grid.cells[i].is_none() {
        grid.cells[i] = Some(seed.species);
    }
}

/// One synchronous growth step: stochastic dilation with logistic damping and
/// a hard carrying-capacity budget, then contact killing.
fn step(grid: &mut Grid, cfg: &SimConfig, rng: &mut ChaCha8Rng) {
    let occupied = grid.occupied();
    let cap = (cfg.carrying_capacity * grid.well_pixels as f64).floor() as usize;
    let budget = cap.saturating_sub(occupied);
    let damp = 1.0 - occupied as f64 / (cfg.carrying_capacity * grid.well_pixels as f64);
    let p = (cfg.growth_rate * damp).clamp(0.0, 1.0);

    // candidates from the previous state, scanned in row-major order
    let mut accepted: Vec<(usize, Species)> = Vec::new();
    if p > 0.0 && budget > 0 {
        for i in 0..grid.cells.len() {
            if !grid.in_well[i] || grid.cells[i].is_some() {
                continue;
            }
            let mut red = 0u32;
            let mut green = 0u32;
            for n in grid.neighbors8(i) {
                match grid.cells[n] {
                    Some(Species::Red) => red += 1,
                    Some(Species::Green) => green += 1,
                    None => {}
                }
            }
            if red == 0 && green == 0 {
                continue;
            }
            let species = if red > green {
                Species::Red
            } else if green > red {
                Species::Green
            } else if rng.random_bool(0.5) {
                Species::Red
            } else {
                Species::Green
            };
            if rng.random_bool(p) {
                accepted.push((i, species));
            }
        }
        if accepted.len() > budget {
            accepted.shuffle(rng);
            accepted.truncate(budget);
        }
        for (i, s) in &accepted {
            grid.cells[*i] = Some(*s);
        }
    }

    if cfg.kill_strength > 0.0 {
        let mut deaths = Vec::new();
        for i in 0..grid.cells.len() {
            let Some(s) = grid.cells[i] else { continue };
            // green attacks red; in symmetric mode each species attacks the other
            let attacker = match (s, cfg.symmetric_kill) {
                (Species::Red, _) => Species::Green,
                (Species::Green, true) => Species::Red,
                (Species::Green, false) => continue,
            };
            let borders_attacker = grid.neighbors8(i).any(|n| grid.cells[n] == Some(attacker));
            if borders_attacker && rng.random_bool(cfg.kill_strength) {
                deaths.push(i);
            }
        }
        for i in deaths {
            grid.cells[i] = None;
        }
    }
}

fn render(grid: &Grid, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Frame> {
    let size = grid.size;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = vec![0.0; size * size * 3];
    for (i, cell) in grid.cells.iter().enumerate() {
        let Some(s) = cell else { continue };
        let intensity = (0.85 + cfg.noise_sigma * normal.sample(rng)).clamp(0.7, 1.0);
        let ch = match s {
            Species::Red => 0,
            Species::Green => 1,
        };
        data[i * 3 + ch] = intensity;
    }
    Frame::new(size, size, data, ColorSpace::Rgb)
}

/// Runs one well: seeds, `frames - 1` growth steps, and a rendered frame per
/// state. Deterministic for a fixed `rng_seed`.
pub fn simulate_well(cfg: &SimConfig) -> Result<(Video, SimTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let center = ((cfg.image_size as f64 - 1.0) / 2.0, (cfg.image_size as f64 - 1.0) / 2.0);
    let mut grid = Grid::new(cfg.image_size, center, cfg.well_radius);

    // seed sizes carry the class imbalance: areas scale with the balance ratio
    let base_radius = 1.6;
    let red_radius = (base_radius * (2.0 * cfg.red_green_balance).sqrt()).max(0.5);
    let green_radius = (base_radius * (2.0 * (1.0 - cfg.red_green_balance)).sqrt()).max(0.5);
    let mut seeds = Vec::new();
    let spawn_radius = cfg.well_radius * 0.6;
    for k in 0..cfg.seeds_red + cfg.seeds_green {
        let (species, radius) = if k < cfg.seeds_red {
            (Species::Red, red_radius)
        } else {
            (Species::Green, green_radius)
        };
        // uniform position in a disk around the well center
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let dist = spawn_radius * rng.random_range(0.0f64..1.0).sqrt();
        let seed = SeedColony {
            species,
            center: (center.0 + dist * angle.sin(), center.1 + dist * angle.cos()),
            radius,
        };
        stamp_seed(&mut grid, &seed);
        seeds.push(seed);
    }

    let mut occupancy = vec![grid.snapshot()];
    let mut frames = vec![render(&grid, cfg, &mut rng)?];
    for _ in 1..cfg.frames {
        step(&mut grid, cfg, &mut rng);
        occupancy.push(grid.snapshot());
        frames.push(render(&grid, cfg, &mut rng)?);
    }

    let video = Video::new(frames)?;
    let truth =
        SimTruth { well_center: center, well_radius: cfg.well_radius, seeds, occupancy };
    Ok((video, truth))
}

/// Writes `n_wells` simulated wells under `out_dir/well_%03d/` with their
/// truth JSON, plus a raw-split manifest. Seed counts vary per well (1..=3
/// per species, scaled by the configured counts); each well draws from its
/// own RNG stream so generation parallelizes deterministically.
pub fn generate_corpus(n_wells: usize, cfg: &SimConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if n_wells == 0 {
        return Err(Error::ConfigError("n_wells must be >= 1".into()));
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let records: Vec<ManifestRecord> = (0..n_wells)
        .into_par_iter()
        .map(|i| -> Result<ManifestRecord> {
            let mut stream = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            stream.set_stream(1 + i as u64);
            let mut well_cfg = cfg.clone();
            well_cfg.seeds_red = stream.random_range(1..=cfg.seeds_red.max(1));
            well_cfg.seeds_green = stream.random_range(1..=cfg.seeds_green.max(1));
            well_cfg.rng_seed = stream.random::<u64>();
            let (video, truth) = simulate_well(&well_cfg)?;

            let name = format!("well_{i:03}");
            let dir = out_dir.join(&name);
            crate::video::save_video(&video, &dir)?;
            truth.save(&dir.join("truth.json"))?;
            Ok(ManifestRecord { well_id: name.clone(), path: name, split: Split::Raw, lineage: vec![] })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest::new(cfg.rng_seed, records);
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_growth_keeps_all_frames_identical() {
        let cfg = SimConfig { growth_rate: 0.0, kill_strength: 0.0, noise_sigma: 0.0, ..SimConfig::default() };
        let (video, truth) = simulate_well(&cfg).unwrap();
        for f in video.frames() {
            assert_eq!(f.data(), video.frames()[0].data());
        }
        for occ in &truth.occupancy {
            assert_eq!(occ.red, truth.occupancy[0].red);
            assert_eq!(occ.green, truth.occupancy[0].green);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SimConfig { rng_seed: 77, ..SimConfig::default() };
        let (a, _) = simulate_well(&cfg).unwrap();
        let (b, _) = simulate_well(&cfg).unwrap();
        for (fa, fb) in a.frames().iter().zip(b.frames()) {
            assert_eq!(fa.data(), fb.data());
        }
    }

    #[test]
    fn growth_without_killing_is_monotone_and_capped() {
        let cfg = SimConfig {
            seeds_red: 0,
            seeds_green: 1,
            kill_strength: 0.0,
            frames: 20,
            rng_seed: 3,
            ..SimConfig::default()
        };
        let (_, truth) = simulate_well(&cfg).unwrap();
        let well_area = std::f64::consts::PI * cfg.well_radius * cfg.well_radius;
        let mut prev = 0;
        for occ in &truth.occupancy {
            let green = occ.green.len();
            assert!(green >= prev, "green population shrank without killing");
            assert!(green as f64 <= cfg.carrying_capacity * well_area * 1.05);
            prev = green;
        }
    }

    #[test]
    fn species_sets_are_disjoint_and_inside_the_well() {
        let cfg = SimConfig { rng_seed: 9, kill_strength: 0.3, ..SimConfig::default() };
        let (_, truth) = simulate_well(&cfg).unwrap();
        for occ in &truth.occupancy {
            let red: std::collections::HashSet<_> = occ.red.iter().collect();
            for g in &occ.green {
                assert!(!red.contains(g), "pixel occupied by both species");
            }
            for (r, c) in occ.red.iter().chain(&occ.green) {
                let dr = *r as f64 - truth.well_center.0;
                let dc = *c as f64 - truth.well_center.1;
                assert!(
                    (dr * dr + dc * dc).sqrt() <= truth.well_radius + 1e-9,
                    "occupied pixel outside the well disk"
                );
            }
        }
    }

    #[test]
    fn occupancy_never_exceeds_carrying_capacity() {
        let cfg = SimConfig { frames: 25, growth_rate: 1.0, rng_seed: 5, ..SimConfig::default() };
        let (_, truth) = simulate_well(&cfg).unwrap();
        let well_pixels = {
            let grid = Grid::new(cfg.image_size, truth.well_center, truth.well_radius);
            grid.well_pixels
        };
        let cap = (cfg.carrying_capacity * well_pixels as f64).floor() as usize;
        for occ in &truth.occupancy {
            assert!(occ.red.len() + occ.green.len() <= cap);
        }
    }

    #[test]
    fn saturation_reached_by_a_finite_frame_with_defaults() {
        // median saturation frame over 50 seeds; defaults are tuned so 90% of
        // capacity is reached around frame 8 of the 14-frame horizon
        let mut saturation_frames = Vec::new();
        for seed in 0..50u64 {
            let cfg = SimConfig { rng_seed: seed, ..SimConfig::default() };
            let (_, truth) = simulate_well(&cfg).unwrap();
            let grid = Grid::new(cfg.image_size, truth.well_center, truth.well_radius);
            let target = 0.9 * cfg.carrying_capacity * grid.well_pixels as f64;
            let frame = truth
                .occupancy
                .iter()
                .position(|o| (o.red.len() + o.green.len()) as f64 >= target);
            saturation_frames.push(frame.expect("default config should saturate") as u64);
        }
        saturation_frames.sort_unstable();
        let median = saturation_frames[saturation_frames.len() / 2];
        assert!(
            (6..=10).contains(&median),
            "median saturation frame {median} far from the expected ~8"
        );
    }

    #[test]
    fn rendered_population_tracks_truth_counts() {
        let cfg = SimConfig { rng_seed: 21, ..SimConfig::default() };
        let (video, truth) = simulate_well(&cfg).unwrap();
        let curve = crate::metrics::population_curve(&video).unwrap();
        let n_pixels = (cfg.image_size * cfg.image_size) as f64;
        for (frame, (green_total, red_total)) in curve.iter().enumerate() {
            let (red_count, green_count) = truth.counts(frame);
            // intensities are 0.85 +- noise, clamped to [0.7, 1.0]
            let bound = |count: usize| {
                let c = count as f64;
                0.7 * c..=1.0 * c + 3.0 * cfg.noise_sigma * n_pixels
            };
            assert!(bound(red_count).contains(red_total), "frame {frame} red {red_total} vs {red_count} px");
            assert!(bound(green_count).contains(green_total), "frame {frame} green {green_total} vs {green_count} px");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let no_seeds = SimConfig { seeds_red: 0, seeds_green: 0, ..SimConfig::default() };
        assert!(matches!(simulate_well(&no_seeds), Err(Error::ConfigError(_))));
        let big_well = SimConfig { well_radius: 30.0, ..SimConfig::default() };
        assert!(matches!(simulate_well(&big_well), Err(Error::ConfigError(_))));
    }

    #[test]
    fn imbalanced_corpus_favors_red() {
        // balance 0.9: red finishes ahead in at least 70% of wells
        let mut red_wins = 0;
        let total = 30;
        for seed in 0..total {
            let cfg = SimConfig { red_green_balance: 0.9, rng_seed: 1000 + seed, ..SimConfig::default() };
            let (_, truth) = simulate_well(&cfg).unwrap();
            let (red, green) = truth.counts(truth.occupancy.len() - 1);
            if red > green {
                red_wins += 1;
            }
        }
        assert!(
            red_wins * 10 >= total * 7,
            "red won only {red_wins}/{total} wells at balance 0.9"
        );
    }
}
