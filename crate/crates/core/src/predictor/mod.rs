//! Stacked spatiotemporal-LSTM video predictor.
//!
//! The model conditions on the first `input_frames` groundtruth frames and
//! generates the rest autoregressively: after the conditioning phase each
//! step's input is the model's own previous prediction. The spatiotemporal
//! memory zigzags bottom-to-top within a timestep and returns from the top
//! layer to the bottom across the timestep boundary. All sequence processing
//! happens on patchified HSV tensors; a 1x1 sigmoid head maps the top hidden
//! state back to patch channels, keeping predictions in [0, 1].

mod cell;
mod checkpoint;
mod patch;
mod train;

pub use cell::{BoundCell, CellParams};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use patch::{patchify, unpatchify};
pub use train::{train, train_on_videos, TrainConfig, TrainLogRow, TrainingLog};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Tape, Tensor, Var};
use crate::video::{video_hsv_to_rgb, video_rgb_to_hsv, ColorSpace, Frame, Video};

/// Architecture and sequence geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_channels: usize,
    pub kernel_size: usize,
    pub patch_size: usize,
    pub input_frames: usize,
    pub total_frames: usize,
    pub in_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 4,
            hidden_channels: 32,
            kernel_size: 5,
            patch_size: 4,
            input_frames: 10,
            total_frames: 20,
            in_channels: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_channels == 0 {
            return Err(Error::ConfigError("layers and hidden channels must be positive".into()));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(Error::ConfigError("kernel_size must be odd".into()));
        }
        if self.patch_size == 0 {
            return Err(Error::ConfigError("patch_size must be positive".into()));
        }
        if self.input_frames == 0 || self.total_frames <= self.input_frames {
            return Err(Error::ConfigError("need total_frames > input_frames >= 1".into()));
        }
        if self.in_channels != 3 {
            return Err(Error::ConfigError("in_channels is fixed at 3".into()));
        }
        Ok(())
    }

    /// Channels of a patchified frame.
    pub fn patch_channels(&self) -> usize {
        self.in_channels * self.patch_size * self.patch_size
    }

    /// Frames the model generates per sequence.
    pub fn predicted_frames(&self) -> usize {
        self.total_frames - self.input_frames
    }
}

/// Whether groundtruth covers the whole sequence or only the conditioning
/// prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// `total_frames` groundtruth frames available (loss over the tail).
    Train,
    /// Only the `input_frames` conditioning frames exist.
    Infer,
}

/// Parameter store for the stacked cells plus the output head.
#[derive(Debug, Clone)]
pub struct PredictorModel {
    pub config: ModelConfig,
    pub(crate) cells: Vec<CellParams>,
    pub(crate) head_kernel: Tensor,
    pub(crate) head_bias: Tensor,
}

impl PredictorModel {
    /// Seeded initialization: uniform weights in +-sqrt(1/fan_in), zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pc = config.patch_channels();
        let cells = (0..config.num_layers)
            .map(|l| {
                let in_ch = if l == 0 { pc } else { config.hidden_channels };
                CellParams::init(in_ch, config.hidden_channels, config.kernel_size, &mut rng)
            })
            .collect();
        let head_bound = (1.0 / config.hidden_channels as f64).sqrt();
        let head_kernel = Tensor::uniform(&[pc, config.hidden_channels, 1, 1], head_bound, &mut rng);
        let head_bias = Tensor::zeros(&[pc]);
        Ok(Self { config, cells, head_kernel, head_bias })
    }

    /// All-zero parameters; analytic fixed point for cell-equation tests.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let pc = config.patch_channels();
        let cells = (0..config.num_layers)
            .map(|l| {
                let in_ch = if l == 0 { pc } else { config.hidden_channels };
                CellParams::zeroed(in_ch, config.hidden_channels, config.kernel_size)
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            cells,
            head_kernel: Tensor::zeros(&[pc, config.hidden_channels, 1, 1]),
            head_bias: Tensor::zeros(&[pc]),
        })
    }

    /// Named parameters in a fixed order shared by the optimizer and the
    /// checkpoint format.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, c) in self.cells.iter().enumerate() {
            out.push((format!("cell{l}.w_x"), &c.w_x));
            out.push((format!("cell{l}.b_x"), &c.b_x));
            out.push((format!("cell{l}.w_h"), &c.w_h));
            out.push((format!("cell{l}.w_m"), &c.w_m));
            out.push((format!("cell{l}.w_o"), &c.w_o));
            out.push((format!("cell{l}.w_mix"), &c.w_mix));
        }
        out.push(("head.kernel".into(), &self.head_kernel));
        out.push(("head.bias".into(), &self.head_bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let Self { cells, head_kernel, head_bias, .. } = self;
        cells
            .iter_mut()
            .flat_map(|c| {
                [&mut c.w_x, &mut c.b_x, &mut c.w_h, &mut c.w_m, &mut c.w_o, &mut c.w_mix]
            })
            .chain([head_kernel, head_bias])
            .collect()
    }

    /// Records all parameters on a tape.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let cells =
            self.cells.iter().map(|c| BoundCell::bind(tape, c, trainable)).collect();
        BoundModel {
            config: self.config.clone(),
            cells,
            head_kernel: tape.leaf(self.head_kernel.clone(), trainable),
            head_bias: tape.leaf(self.head_bias.clone(), trainable),
        }
    }
}

/// A [`PredictorModel`] recorded on a tape, ready to run.
pub struct BoundModel {
    pub config: ModelConfig,
    cells: Vec<BoundCell>,
    head_kernel: Var,
    head_bias: Var,
}

impl BoundModel {
    /// Parameter vars in [`PredictorModel::params`] order.
    pub fn param_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for c in &self.cells {
            out.extend(c.param_vars());
        }
        out.push(self.head_kernel);
        out.push(self.head_bias);
        out
    }

    /// Runs the recurrence over patchified frames `[N, Cp, Hp, Wp]` and
    /// returns the generated tail (`total_frames - input_frames` vars).
    pub fn forward_sequence(
        &self,
        tape: &mut Tape,
        frames: &[Tensor],
        mode: ForwardMode,
    ) -> Result<Vec<Var>> {
        let cfg = &self.config;
        let expected = match mode {
            ForwardMode::Train => cfg.total_frames,
            ForwardMode::Infer => cfg.input_frames,
        };
        if frames.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{mode:?} mode wants {expected} frames, got {}",
                frames.len()
            )));
        }
        let shape = frames[0].shape().to_vec();
        if shape.len() != 4 || shape[1] != cfg.patch_channels() {
            return Err(Error::ShapeMismatch(format!(
                "frame tensors must be [N, {}, h, w], got {shape:?}",
                cfg.patch_channels()
            )));
        }
        for f in frames {
            if f.shape() != shape {
                return Err(Error::ShapeMismatch("inconsistent frame tensor shapes".into()));
            }
        }
        let state_shape = [shape[0], cfg.hidden_channels, shape[2], shape[3]];

        let mut hidden: Vec<Var> =
            (0..cfg.num_layers).map(|_| tape.constant(Tensor::zeros(&state_shape))).collect();
        let mut cell_mem: Vec<Var> = hidden.clone();
        let mut st_mem = tape.constant(Tensor::zeros(&state_shape));

        let mut predictions = Vec::with_capacity(cfg.predicted_frames());
        let mut last_pred: Option<Var> = None;
        for t in 0..cfg.total_frames - 1 {
            let x_t = if t < cfg.input_frames {
                tape.constant(frames[t].clone())
            } else {
                last_pred.expect("predictions exist after the conditioning phase")
            };
            let mut layer_input = x_t;
            for l in 0..cfg.num_layers {
                let (h, c, m) =
                    self.cells[l].forward(tape, layer_input, hidden[l], cell_mem[l], st_mem)?;
                hidden[l] = h;
                cell_mem[l] = c;
                st_mem = m; // flows up the stack, then wraps to layer 0 at t+1
                layer_input = h;
            }
            if t + 1 >= cfg.input_frames {
                let logits =
                    tape.conv2d(hidden[cfg.num_layers - 1], self.head_kernel, Some(self.head_bias))?;
                let pred = tape.sigmoid(logits)?;
                predictions.push(pred);
                last_pred = Some(pred);
            }
        }
        Ok(predictions)
    }
}

/// Converts an interleaved [`Frame`] into a planar `[3, H, W]` tensor.
pub fn frame_to_tensor(frame: &Frame) -> Tensor {
    let (h, w) = (frame.height(), frame.width());
    let mut data = vec![0.0; h * w * 3];
    for (i, px) in frame.data().chunks_exact(3).enumerate() {
        for ch in 0..3 {
            data[ch * h * w + i] = px[ch];
        }
    }
    Tensor::new(vec![3, h, w], data).expect("frame data is validated")
}

/// Converts a planar `[3, H, W]` tensor back into an interleaved [`Frame`].
pub fn tensor_to_frame(tensor: &Tensor, space: ColorSpace) -> Result<Frame> {
    let s = tensor.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::ShapeMismatch(format!("expected [3, H, W], got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let mut data = vec![0.0; h * w * 3];
    for ch in 0..3 {
        for i in 0..h * w {
            data[i * 3 + ch] = tensor.data()[ch * h * w + i];
        }
    }
    Frame::new(h, w, data, space)
}

/// Patchified per-frame tensors (`[Cp, Hp, Wp]`) of an HSV video.
pub(crate) fn video_to_patch_frames(video: &Video, patch: usize) -> Result<Vec<Tensor>> {
    video.frames().iter().map(|f| patchify(&frame_to_tensor(f), patch)).collect()
}

/// Stacks per-sample `[C, h, w]` tensors into one `[N, C, h, w]` batch.
pub(crate) fn stack_batch(samples: &[&Tensor]) -> Result<Tensor> {
    let first = samples.first().ok_or(Error::EmptyDataset("batch".into()))?;
    let mut shape = vec![samples.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(first.numel() * samples.len());
    for s in samples {
        if s.shape() != first.shape() {
            return Err(Error::ShapeMismatch("batch samples differ in shape".into()));
        }
        data.extend_from_slice(s.data());
    }
    Tensor::new(shape, data)
}

/// Loads a checkpoint and generates the predicted tail for a conditioning
/// video, returned in RGB.
pub fn predict(checkpoint_path: &Path, input: &Video) -> Result<Video> {
    let (model, _, _) = load_checkpoint(checkpoint_path)?;
    let cfg = model.config.clone();
    let hsv = match input.space() {
        ColorSpace::Rgb => video_rgb_to_hsv(input)?,
        ColorSpace::Hsv => input.clone(),
    };
    if hsv.len() != cfg.input_frames {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint expects {} conditioning frames, video has {}",
            cfg.input_frames,
            hsv.len()
        )));
    }
    if hsv.height() % cfg.patch_size != 0 || hsv.width() % cfg.patch_size != 0 {
        return Err(Error::ConfigMismatch(format!(
            "{}x{} frames are not divisible by patch size {}",
            hsv.height(),
            hsv.width(),
            cfg.patch_size
        )));
    }

    let frames: Vec<Tensor> = video_to_patch_frames(&hsv, cfg.patch_size)?
        .iter()
        .map(|t| stack_batch(&[t]))
        .collect::<Result<_>>()?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let preds = bound.forward_sequence(&mut tape, &frames, ForwardMode::Infer)?;

    let mut out_frames = Vec::with_capacity(preds.len());
    for p in preds {
        let value = tape.value(p);
        let per_sample = Tensor::new(value.shape()[1..].to_vec(), value.data().to_vec())?;
        let full = unpatchify(&per_sample, cfg.patch_size)?;
        out_frames.push(tensor_to_frame(&full, ColorSpace::Hsv)?);
    }
    let hsv_video = Video::new(out_frames)?;
    video_hsv_to_rgb(&hsv_video)
}
