//! Mean-teacher training, evaluation and experiment drivers.

mod ablation;
mod config;
mod experiment;
mod metrics;
mod step;

pub use ablation::{run_grid, summarize, GridRun, Variant, VariantSummary};
pub use config::{Preset, RunConfig, TrainConfig};
pub use experiment::{
    iters_per_epoch, labeled_schedule, load_model, load_state, read_history, run_experiment, state_tensors,
    evaluate_state, EpochRecord, RunOptions, RunOutcome, BEST_CKPT, CONFIG_FILE, FINAL_CKPT, HISTORY_FILE,
};
pub use metrics::{evaluate, ConfusionMatrix, EvalReport};
pub use step::{strong_view, teacher_targets, train_step, StepMetrics, StepTrace, StrongView, TrainState};
