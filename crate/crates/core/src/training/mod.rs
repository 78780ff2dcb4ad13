//! Optimization shared by both stages.

mod mix;
mod optim;
mod plan;
mod schedule;
mod trainer;

pub use mix::{epoch_batches, BatchMixer, BatchSource};
pub use optim::{adam_step, clip_gradients, AdamState, OptimizerConfig};
pub use plan::{DataConfig, KeyFactOrder, MixMode, MixingConfig, Stage, TrainPlan};
pub use schedule::{Decision, ScheduleConfig, ScheduleState};
pub use trainer::{
    key_fact_pairs, realizer_bleu, tagger_f1, train_realizer, train_tagger, EpochRecord, Phase, RealizerData, TokenPair, TrainLog,
    Trained,
};
