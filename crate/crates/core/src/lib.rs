//! Generalized decoder for pixel-level segmentation and token-level
//! vision-language tasks, sized to train on a CPU.

pub mod config;
pub mod data;
pub mod decoder;
pub mod encoders;
pub mod error;
pub mod nn;
pub mod losses;
pub mod model;
pub mod training;
pub mod tasks;
pub mod metrics;

pub use config::{AttentionSwitches, DataConfig, EvalConfig, LossWeights, ModelConfig, RunConfig, TrainConfig};
pub use data::{generate_corpus, Dataset, Sample};
pub use decoder::TaskMode;
pub use encoders::{Image, Vocabulary};
pub use error::{Error, Result};
pub use metrics::{EvalTask, MetricReport};
pub use model::XDecoderModel;
pub use training::{load_checkpoint, save_checkpoint, TrainState};
