//! Adagrad training with global-norm clipping, validation-based early
//! stopping, coverage fine-tuning, and checkpoint files.

mod adagrad;
mod checkpoint;
mod trainer;

pub use adagrad::{adagrad_step, AdagradState};
pub use checkpoint::{enable_coverage, Checkpoint, CheckpointMeta, GroupKind, Manifest, ManifestGroup, MAGIC};
pub use trainer::{
    train, validation_loss, CsvLog, CurriculumStage, EvalRecord, LogRow, StopReason, TrainConfig, TrainOutcome,
};
