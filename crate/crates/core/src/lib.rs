//! Core library for the wellcast microwell video toolkit.
//!
//! Modules follow the processing order: [`simulate`] generates synthetic raw
//! corpora, [`preprocess`] centers and expands wells, [`augment`] grows the
//! dataset and assigns splits, [`predictor`] (on top of [`numeric`]) learns
//! and forecasts sequences, and [`metrics`] scores predictions.

pub mod augment;
pub mod error;
pub mod metrics;
pub mod numeric;
pub mod predictor;
pub mod preprocess;
pub mod simulate;
pub mod video;

pub use error::{Error, Result};
pub use metrics::{EvalConfig, EvalReport, Species};
pub use numeric::{AdamState, Tape, Tensor, Var};
pub use predictor::{ModelConfig, PredictorModel, TrainConfig};
pub use simulate::{SimConfig, SimTruth};
pub use video::{ColorSpace, DatasetManifest, Frame, ManifestRecord, Split, Video, WellRecord};
