//! End-to-end pipeline over synthetic data: simulate -> preprocess ->
//! augment -> train -> predict -> eval, each stage writing to its own
//! subdirectory of `--out`.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use wellcast_core::error::Result;
use wellcast_core::video::{load_video, DatasetManifest};

use crate::commands::{
    choose_test_wells, run_augment, run_eval, run_predict, run_preprocess, run_simulate,
    run_train, save_video_slice, write_run_config, AugmentArgs, EvalArgs, PredictArgs,
    PreprocessArgs, SimulateArgs, TrainArgs,
};

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 48)]
    pub wells: usize,
    #[arg(long, default_value_t = 14)]
    pub frames: usize,
    #[arg(long, default_value_t = 24)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub balance: f64,
    /// Wells held out of augmentation and training.
    #[arg(long = "test-wells", default_value_t = 4)]
    pub test_wells: usize,
    #[arg(long, default_value_t = 2_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
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
    #[arg(long = "target-frames", default_value_t = 20)]
    pub target_frames: usize,
    #[arg(long = "validate-every", default_value_t = 200)]
    pub validate_every: usize,
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
}

pub fn run_pipeline(args: &PipelineArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let raw_dir = args.out.join("raw");
    let pre_dir = args.out.join("pre");
    let data_dir = args.out.join("data");

    run_simulate(&SimulateArgs {
        wells: args.wells,
        frames: args.frames,
        size: args.size,
        seed: args.seed,
        out: raw_dir.clone(),
        balance: args.balance,
        radius: args.size as f64 * 10.0 / 24.0,
        growth: 2.0,
        kill: 0.15,
        symmetric_kill: false,
        noise: 0.03,
    })?;

    run_preprocess(&PreprocessArgs {
        manifest: raw_dir.join("manifest.json"),
        out: pre_dir.clone(),
        keep_frames: 7,
        target_frames: args.target_frames,
        size: 32,
        crop: args.size.min(24),
    })?;

    let pre_manifest = DatasetManifest::load(&pre_dir.join("manifest.json"))?;
    let held_out = choose_test_wells(&pre_manifest, args.test_wells, args.seed);
    run_augment(&AugmentArgs {
        manifest: pre_dir.join("manifest.json"),
        out: data_dir.clone(),
        test_wells: held_out.clone(),
        seed: args.seed,
        train_fraction: 0.8,
        blur_sigma: 0.5,
        noise_sigma: 0.02,
    })?;

    let ckpt = args.out.join("model.wckp");
    run_train(&TrainArgs {
        manifest: data_dir.join("manifest.json"),
        out: ckpt.clone(),
        iterations: args.iterations,
        lr: args.lr,
        batch: args.batch,
        seed: args.seed,
        layers: args.layers,
        hidden: args.hidden,
        kernel: args.kernel,
        patch: args.patch,
        input_frames: args.input_frames,
        total_frames: args.target_frames,
        validate_every: args.validate_every,
        checkpoint_every: args.iterations.max(1),
        log: Some(args.out.join("train_log.csv")),
    })?;

    let reports_dir = args.out.join("reports");
    std::fs::create_dir_all(&reports_dir)?;
    for well in &held_out {
        let video = load_video(&data_dir.join(well))?;
        let input_dir = args.out.join("input").join(well);
        let gt_dir = args.out.join("gt").join(well);
        let pred_dir = args.out.join("pred").join(well);
        save_video_slice(&video, 0..args.input_frames, &input_dir)?;
        save_video_slice(&video, args.input_frames..video.len(), &gt_dir)?;
        run_predict(&PredictArgs { ckpt: ckpt.clone(), input: input_dir, out: pred_dir.clone() })?;
        run_eval(&EvalArgs {
            gt: gt_dir,
            pred: pred_dir,
            out: reports_dir.join(format!("{well}.json")),
            threshold: args.threshold,
            min_pixels: 4,
            well_id: Some(well.clone()),
        })?;
    }

    log::info!("pipeline complete: {} test wells evaluated", held_out.len());
    write_run_config(&args.out, "pipeline", args)
}
