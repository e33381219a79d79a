//! Minimal dense network and its training loop.

mod model;
mod train;

pub use model::{ForwardCache, Gradients, Head, Layer, MlpModel, CHECKPOINT_MAGIC};
pub use train::{
    evaluate, reinit_and_finetune, train, train_observed, EpochRecord, LayerMask, TrainConfig, TrainLog,
    TrainOutcome,
};
