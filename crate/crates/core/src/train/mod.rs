//! Losses, the mini-batch training loop and checkpoints.

mod checkpoint;
mod fit;
mod loss;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, model_from_bytes, save_checkpoint, CheckpointMeta, MAGIC, VERSION};
pub use fit::{
    evaluate_loss, fit, sample_loss_vars, train_epoch, EpochStats, TrainConfig, TrainLog, TrainSet, AUGMENT_STEP_DEGREES, CHUNK,
    TRAIN_KEYS,
};
pub use loss::{kl_vars, mse_loss, mse_vars, variety_loss, variety_vars};
