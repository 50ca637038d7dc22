//! Training loop: batched MSE over the predicted tail, Adam updates,
//! periodic validation and checkpointing.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{adam_step, AdamState, Tape, Tensor};
use crate::video::{load_video, video_rgb_to_hsv, ColorSpace, DatasetManifest, Split, Video};

use super::{
    save_checkpoint, stack_batch, video_to_patch_frames, ForwardMode, PredictorModel,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Validation MSE is computed at every multiple of this (and at the end).
    pub validate_every: usize,
    /// A checkpoint is written at every multiple of this (and at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 50_000,
            learning_rate: 3e-4,
            batch_size: 8,
            seed: 0,
            validate_every: 200,
            checkpoint_every: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub train_mse: f64,
    /// Present only on validation iterations.
    pub valid_mse: Option<f64>,
}

/// Per-iteration training record, exportable as CSV.
#[derive(Debug, Clone, Default)]
pub struct TrainingLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainingLog {
    /// `iteration,train_mse,valid_mse` with the last column blank except on
    /// validation iterations.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iteration,train_mse,valid_mse\n");
        for row in &self.rows {
            match row.valid_mse {
                Some(v) => out.push_str(&format!("{},{},{}\n", row.iteration, row.train_mse, v)),
                None => out.push_str(&format!("{},{},\n", row.iteration, row.train_mse)),
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// One video prepared for the recurrence: per-frame patch tensors.
struct PreparedVideo {
    frames: Vec<Tensor>,
}

fn prepare_videos(videos: &[Video], model: &PredictorModel) -> Result<Vec<PreparedVideo>> {
    let cfg = &model.config;
    videos
        .iter()
        .map(|video| {
            let hsv = match video.space() {
                ColorSpace::Rgb => video_rgb_to_hsv(video)?,
                ColorSpace::Hsv => video.clone(),
            };
            if hsv.len() != cfg.total_frames {
                return Err(Error::ShapeMismatch(format!(
                    "training video has {} frames, model wants {}",
                    hsv.len(),
                    cfg.total_frames
                )));
            }
            if hsv.height() % cfg.patch_size != 0 || hsv.width() % cfg.patch_size != 0 {
                return Err(Error::ShapeMismatch(format!(
                    "{}x{} frames not divisible by patch size {}",
                    hsv.height(),
                    hsv.width(),
                    cfg.patch_size
                )));
            }
            Ok(PreparedVideo { frames: video_to_patch_frames(&hsv, cfg.patch_size)? })
        })
        .collect()
}

/// Mean MSE over the predicted tail for a batch; `trainable` also runs the
/// backward pass and returns the gradient source tape.
fn run_batch(
    model: &PredictorModel,
    batch: &[&PreparedVideo],
    trainable: bool,
) -> Result<(f64, Option<(Tape, Vec<crate::numeric::Var>)>)> {
    let cfg = &model.config;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, trainable);
    let frames: Vec<Tensor> = (0..cfg.total_frames)
        .map(|t| {
            let samples: Vec<&Tensor> = batch.iter().map(|v| &v.frames[t]).collect();
            stack_batch(&samples)
        })
        .collect::<Result<_>>()?;
    let preds = bound.forward_sequence(&mut tape, &frames, ForwardMode::Train)?;

    let mut loss = None;
    for (k, p) in preds.iter().enumerate() {
        let target = tape.constant(frames[cfg.input_frames + k].clone());
        let l = tape.mse_loss(*p, target)?;
        loss = Some(match loss {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    let scale = tape.constant(Tensor::scalar(1.0 / preds.len() as f64));
    let loss = tape.mul(loss.expect("at least one predicted frame"), scale)?;
    let value = tape.value(loss).item()?;

    if trainable {
        tape.backward(loss)?;
        let vars = bound.param_vars();
        Ok((value, Some((tape, vars))))
    } else {
        Ok((value, None))
    }
}

fn validation_mse(model: &PredictorModel, valid: &[PreparedVideo], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in valid.chunks(batch_size.max(1)) {
        let refs: Vec<&PreparedVideo> = chunk.iter().collect();
        let (mse, _) = run_batch(model, &refs, false)?;
        total += mse * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count as f64)
}

/// Trains in place on already loaded videos. `checkpoint_path`, when given,
/// receives a checkpoint every `checkpoint_every` iterations and at the end.
pub fn train_on_videos(
    model: &mut PredictorModel,
    train_videos: &[Video],
    valid_videos: &[Video],
    cfg: &TrainConfig,
    checkpoint_path: Option<&Path>,
) -> Result<TrainingLog> {
    if train_videos.is_empty() {
        return Err(Error::EmptyDataset("train".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::ConfigError("batch_size must be >= 1".into()));
    }
    let train_set = prepare_videos(train_videos, model)?;
    let valid_set = prepare_videos(valid_videos, model)?;

    let shapes: Vec<Vec<usize>> =
        model.params().iter().map(|(_, t)| t.shape().to_vec()).collect();
    let mut adam = AdamState::new(cfg.learning_rate, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1); // distinct from any model-init stream on the same seed

    let mut log = TrainingLog::default();
    for iteration in 1..=cfg.iterations {
        let batch: Vec<&PreparedVideo> =
            (0..cfg.batch_size).map(|_| &train_set[rng.random_range(0..train_set.len())]).collect();
        let (train_mse, grads_source) = run_batch(model, &batch, true)?;
        let (tape, vars) = grads_source.expect("trainable run returns its tape");
        let grads: Vec<&[f64]> =
            vars.iter().map(|v| tape.grad(*v).expect("backward populated grads")).collect();
        let mut params = model.params_mut();
        adam_step(&mut params, &grads, &mut adam)?;
        drop(tape);

        let validate = !valid_set.is_empty()
            && (iteration % cfg.validate_every == 0 || iteration == cfg.iterations);
        let valid_mse =
            if validate { Some(validation_mse(model, &valid_set, cfg.batch_size)?) } else { None };
        if iteration % cfg.validate_every == 0 || iteration == cfg.iterations {
            log::info!(
                "iteration {iteration}: train mse {train_mse:.6}{}",
                valid_mse.map(|v| format!(", valid mse {v:.6}")).unwrap_or_default()
            );
        }
        log.rows.push(TrainLogRow { iteration, train_mse, valid_mse });

        if let Some(path) = checkpoint_path {
            if iteration % cfg.checkpoint_every == 0 || iteration == cfg.iterations {
                save_checkpoint(path, model, iteration as u64, &adam)?;
            }
        }
    }
    if cfg.iterations == 0 {
        if let Some(path) = checkpoint_path {
            save_checkpoint(path, model, 0, &adam)?;
        }
    }
    Ok(log)
}

/// Manifest-driven training: loads the train and valid splits relative to
/// `manifest_dir` and trains in place.
pub fn train(
    model: &mut PredictorModel,
    manifest: &DatasetManifest,
    manifest_dir: &Path,
    cfg: &TrainConfig,
    checkpoint_path: &Path,
) -> Result<TrainingLog> {
    let load_split = |split: Split| -> Result<Vec<Video>> {
        manifest
            .records_in(split)
            .map(|r| load_video(&manifest_dir.join(&r.path)))
            .collect()
    };
    let train_videos = load_split(Split::Train)?;
    let valid_videos = load_split(Split::Valid)?;
    if train_videos.is_empty() {
        return Err(Error::EmptyDataset("train".into()));
    }
    train_on_videos(model, &train_videos, &valid_videos, cfg, Some(checkpoint_path))
}
