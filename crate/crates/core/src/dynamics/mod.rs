//! Learned forward dynamics: the aggregated transition dataset, input/output
//! normalization, and a deterministic MLP model trained on squared
//! next-state error.

mod dataset;
mod model;
mod normalizer;

pub use dataset::{Batch, TransitionDataset};
pub use model::{per_transition_error, DynamicsModel, ModelConfig, PredictionMode, TrainingReport};
pub use normalizer::{Normalizer, Stats, STD_FLOOR};
