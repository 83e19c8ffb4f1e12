//! Loss, optimiser, training loop and checkpoints.

mod adam;
mod checkpoint;
mod fit;
mod loss;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{checkpoint_load, checkpoint_save, decode_checkpoint, encode_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use fit::{evaluate, fit, fit_with, EpochMetrics, Evaluation, FitOutcome, TrainConfig};
pub use loss::{cross_entropy_per_row, softmax_cross_entropy};
