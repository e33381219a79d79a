//! Flood-level regularized training.
//!
//! This crate provides the constant-level Flood and iFlood objectives, the
//! per-sample AdaFlood objective, and the pipeline that estimates per-sample
//! flood levels from held-out auxiliary models. Everything runs on a small
//! dense MLP with hand-written backpropagation so that gradients, seeds and
//! checkpoints are fully under our control.
//!
//! Module map:
//! - [`nn`]: MLP forward/backward, SGD training loop, fine-tuning.
//! - [`flood`]: objectives, correction functions, [`FloodTable`].
//! - [`auxiliary`]: k-fold auxiliary models and flood-level estimation.
//! - [`data`]: datasets, toy Gaussian generator, noise injection, CSV I/O.
//! - [`metrics`]: accuracy, regression metrics, NLL, ECE, Spearman.

pub mod auxiliary;
pub mod data;
mod error;
pub mod flood;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use auxiliary::{AuxConfig, AuxMode, AuxModels, FoldAssignment};
pub use data::{Dataset, Labels, SampleFlag, Task};
pub use error::{Error, Result};
pub use flood::{FloodConfig, FloodTable, FloodVariant, Objective};
pub use matrix::Matrix;
pub use nn::{LayerMask, MlpModel, TrainConfig};
