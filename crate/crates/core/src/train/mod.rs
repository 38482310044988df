//! The training recipe: step-scheduled SGD with momentum over augmented
//! mini-batches, evaluation, and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod optim;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, TensorEntry, BLOB_FILE, MANIFEST_FILE};
pub use config::{lr_at_epoch, TrainConfig};
pub use optim::{sgd_momentum_step, zero_velocity};
pub use trainer::{evaluate, evaluate_batched, predict_dataset, train, EpochRecord, History, EVAL_BATCH};
