//! One function per subcommand, plus the resolved-config record each run
//! writes next to its outputs.

use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use wellcast_core::augment::{expand_dataset, AugmentConfig, SplitSpec};
use wellcast_core::error::Result;
use wellcast_core::metrics::{evaluate_well, EvalConfig};
use wellcast_core::predictor::{predict, train, ModelConfig, PredictorModel, TrainConfig};
use wellcast_core::preprocess::{preprocess_well, PreprocessConfig};
use wellcast_core::simulate::{generate_corpus, SimConfig};
use wellcast_core::video::{
    load_video, save_video, video_hsv_to_rgb, DatasetManifest, ManifestRecord, Split, Video,
    WellRecord,
};

/// Writes the fully resolved arguments as JSON so the run is reproducible.
pub fn write_run_config<A: Serialize>(dir_or_file: &Path, subcommand: &str, args: &A) -> Result<()> {
    #[derive(Serialize)]
    struct RunConfig<'a, A> {
        subcommand: &'a str,
        args: &'a A,
        workers: usize,
    }
    let record =
        RunConfig { subcommand, args, workers: rayon::current_num_threads() };
    let path = if dir_or_file.is_dir() {
        dir_or_file.join("run_config.json")
    } else {
        let name = dir_or_file
            .file_name()
            .map(|n| format!("{}.config.json", n.to_string_lossy()))
            .unwrap_or_else(|| "run_config.json".into());
        dir_or_file.with_file_name(name)
    };
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Number of wells to generate.
    #[arg(long, default_value_t = 48)]
    pub wells: usize,
    #[arg(long, default_value_t = 14)]
    pub frames: usize,
    /// Square frame side in pixels.
    #[arg(long, default_value_t = 24)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed-size bias toward red (0.5 balanced, 1.0 all red).
    #[arg(long, default_value_t = 0.5)]
    pub balance: f64,
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 2.0)]
    pub growth: f64,
    /// Contact-killing probability (green kills red).
    #[arg(long, default_value_t = 0.15)]
    pub kill: f64,
    /// Both species kill on contact instead of green only.
    #[arg(long, default_value_t = false)]
    pub symmetric_kill: bool,
    #[arg(long, default_value_t = 0.03)]
    pub noise: f64,
}

pub fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = SimConfig {
        image_size: args.size,
        frames: args.frames,
        well_radius: args.radius,
        growth_rate: args.growth,
        kill_strength: args.kill,
        symmetric_kill: args.symmetric_kill,
        noise_sigma: args.noise,
        rng_seed: args.seed,
        red_green_balance: args.balance,
        ..SimConfig::default()
    };
    generate_corpus(args.wells, &cfg, &args.out)?;
    log::info!("simulated {} wells into {}", args.wells, args.out.display());
    write_run_config(&args.out, "simulate", args)
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "keep-frames", default_value_t = 7)]
    pub keep_frames: usize,
    #[arg(long = "target-frames", default_value_t = 20)]
    pub target_frames: usize,
    /// Output frame side after bilinear resampling.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Crop side around the located well center.
    #[arg(long, default_value_t = 24)]
    pub crop: usize,
}

pub fn run_preprocess(args: &PreprocessArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let cfg = PreprocessConfig {
        keep_frames: args.keep_frames,
        target_frames: args.target_frames,
        crop_size: args.crop,
        target_size: args.size,
    };
    std::fs::create_dir_all(&args.out)?;
    let records: Vec<ManifestRecord> = manifest
        .records
        .par_iter()
        .map(|r| -> Result<ManifestRecord> {
            let video = load_video(&base.join(&r.path))?;
            let record = WellRecord {
                well_id: r.well_id.clone(),
                video,
                split: r.split,
                lineage: r.lineage.clone(),
            };
            let processed = preprocess_well(&record, &cfg)?;
            let rgb = video_hsv_to_rgb(&processed.video)?;
            save_video(&rgb, &args.out.join(&r.well_id))?;
            Ok(ManifestRecord {
                well_id: r.well_id.clone(),
                path: r.well_id.clone(),
                split: r.split,
                lineage: r.lineage.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetManifest::new(manifest.seed, records).save(&args.out.join("manifest.json"))?;
    log::info!("preprocessed {} wells into {}", manifest.records.len(), args.out.display());
    write_run_config(&args.out, "preprocess", args)
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated well ids held out as the test set.
    #[arg(long = "test-wells", value_delimiter = ',', default_value = "")]
    pub test_wells: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "train-fraction", default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long = "blur-sigma", default_value_t = 0.5)]
    pub blur_sigma: f64,
    #[arg(long = "noise-sigma", default_value_t = 0.02)]
    pub noise_sigma: f64,
}

pub fn run_augment(args: &AugmentArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let records: Vec<WellRecord> = manifest
        .records
        .par_iter()
        .map(|r| -> Result<WellRecord> {
            let video = load_video(&base.join(&r.path))?;
            Ok(WellRecord {
                well_id: r.well_id.clone(),
                video: wellcast_core::video::video_rgb_to_hsv(&video)?,
                split: r.split,
                lineage: r.lineage.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut aug = AugmentConfig { seed: args.seed, ..AugmentConfig::default() };
    aug.blur_sigma = args.blur_sigma;
    aug.noise_sigma = args.noise_sigma;
    aug.multiplicity = 1
        + aug.flips.len()
        + aug.rotations.len()
        + usize::from(aug.blur_sigma > 0.0)
        + usize::from(aug.noise_sigma > 0.0);
    let split = SplitSpec {
        train_fraction: args.train_fraction,
        test_well_ids: args.test_wells.iter().filter(|s| !s.is_empty()).cloned().collect(),
    };
    let manifest = expand_dataset(&records, &aug, &split, &args.out)?;
    log::info!(
        "augmented {} wells into {} records at {}",
        records.len(),
        manifest.records.len(),
        args.out.display()
    );
    write_run_config(&args.out, "augment", args)
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 5)]
    pub kernel: usize,
    #[arg(long, default_value_t = 4)]
    pub patch: usize,
    #[arg(long = "input-frames", default_value_t = 10)]
    pub input_frames: usize,
    #[arg(long = "total-frames", default_value_t = 20)]
    pub total_frames: usize,
    #[arg(long = "validate-every", default_value_t = 200)]
    pub validate_every: usize,
    #[arg(long = "checkpoint-every", default_value_t = 5_000)]
    pub checkpoint_every: usize,
    /// Training log CSV (default: `<out>.log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

impl TrainArgs {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            num_layers: self.layers,
            hidden_channels: self.hidden,
            kernel_size: self.kernel,
            patch_size: self.patch,
            input_frames: self.input_frames,
            total_frames: self.total_frames,
            in_channels: 3,
        }
    }
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut model = PredictorModel::new(args.model_config(), args.seed)?;
    let cfg = TrainConfig {
        iterations: args.iterations,
        learning_rate: args.lr,
        batch_size: args.batch,
        seed: args.seed,
        validate_every: args.validate_every,
        checkpoint_every: args.checkpoint_every,
    };
    let log = train(&mut model, &manifest, &base, &cfg, &args.out)?;
    let log_path = args.log.clone().unwrap_or_else(|| {
        let name = args.out.file_name().map(|n| n.to_string_lossy().into_owned());
        args.out.with_file_name(format!("{}.log.csv", name.unwrap_or_else(|| "train".into())))
    });
    log.save_csv(&log_path)?;
    log::info!("trained {} iterations; checkpoint at {}", args.iterations, args.out.display());
    write_run_config(&args.out, "train", args)
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Directory with the conditioning frames.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for the predicted frames.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_predict(args: &PredictArgs) -> Result<()> {
    let input = load_video(&args.input)?;
    let predicted = predict(&args.ckpt, &input)?;
    save_video(&predicted, &args.out)?;
    log::info!("predicted {} frames into {}", predicted.len(), args.out.display());
    write_run_config(&args.out, "predict", args)
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Groundtruth video directory (the frames the prediction targets).
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Report JSON path; a flat CSV lands next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    #[arg(long = "min-pixels", default_value_t = 4)]
    pub min_pixels: usize,
    /// Well id recorded in the report (default: groundtruth directory name).
    #[arg(long = "well-id")]
    pub well_id: Option<String>,
}

pub fn run_eval(args: &EvalArgs) -> Result<()> {
    let gt = load_video(&args.gt)?;
    let pred = load_video(&args.pred)?;
    let well_id = args.well_id.clone().unwrap_or_else(|| {
        args.gt.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "well".into())
    });
    let cfg = EvalConfig { value_threshold: args.threshold, min_colony_pixels: args.min_pixels };
    let report = evaluate_well(&well_id, &gt, &pred, &cfg)?;
    report.save_json(&args.out)?;
    report.save_csv(&args.out.with_extension("csv"))?;
    log::info!(
        "evaluated {}: mean mse {:.3}, mean ssim {:.4}",
        well_id,
        report.averages.mse,
        report.averages.ssim
    );
    write_run_config(&args.out, "eval", args)
}

/// Slices a video into a new directory-backed video (used by the pipeline to
/// produce conditioning inputs and groundtruth tails).
pub fn save_video_slice(video: &Video, range: std::ops::Range<usize>, dir: &Path) -> Result<()> {
    let frames = video.frames()[range].to_vec();
    let sliced = Video::new(frames)?;
    save_video(&sliced, dir)
}

/// Deterministic held-out well choice: shuffle ids with the run seed.
pub fn choose_test_wells(manifest: &DatasetManifest, count: usize, seed: u64) -> Vec<String> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut ids: Vec<String> = manifest.records_in(Split::Raw).map(|r| r.well_id.clone()).collect();
    if ids.is_empty() {
        ids = manifest.records.iter().map(|r| r.well_id.clone()).collect();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    ids.shuffle(&mut rng);
    ids.truncate(count);
    ids.sort();
    ids
}
