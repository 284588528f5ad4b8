//! End-to-end training over mixed batches: per-step loss assembly, the
//! decoupled-weight-decay optimizer, checkpoints and the step log.

mod checkpoint;
mod optimizer;
mod state;
mod step;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointEntry, CheckpointMeta,
    MAGIC, VERSION,
};
pub use optimizer::AdamW;
pub use state::{run_training, StepRecord, TrainState};
pub use step::{mask_targets, step_loss};
