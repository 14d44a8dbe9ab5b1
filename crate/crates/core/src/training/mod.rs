//! Optimizer, training loop, unsupervised pretraining, λ sweep and checkpoints.

mod checkpoint;
mod gradcheck;
mod optim;
mod train;

pub use checkpoint::{max_relative_diff, Checkpoint, FORMAT_VERSION, MAGIC};
pub use gradcheck::{gradcheck_family, GradCheckSetup};
pub use optim::{adam_step, AdamHyper, AdamState};
pub use train::{
    evaluate_f1, export_encoder, lambda_sweep, pretrain_unsupervised, train, train_with, EpochRecord, PseudoTargets,
    Sampler, SweepRow, TrainConfig, TrainData, TrainOutcome, Trainer, DEFAULT_SPEC,
};
