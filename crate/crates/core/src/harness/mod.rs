//! Experiment orchestration: the joint training loop, periodic offline
//! evaluation, the method and ablation matrix, checkpoints and CSV output.

mod ablation;
mod config;
mod curve;
mod evaluate;
mod output;
mod run;
mod trainer;

pub use ablation::{ablation_matrix, AblationAxis, HORIZONS, MODEL_WIDTHS};
pub use config::{resolve_output, slug, Collector, ExperimentConfig, Method, OUTPUT_ROOT_VAR};
pub use curve::{best_so_far, best_so_far_curve, bootstrap_ci, CurvePoint, EvalRecord};
pub use evaluate::{evaluate_offline, EvalSeeds, Snapshots};
pub use output::{plot_data, AGENT_LOG_FILE, HELD_OUT_FILE, LEGEND_FILE};
pub use run::{evaluate_checkpoint, run_experiment, run_group, test_set, RunOptions, RunStatus, RunSummary, TEST_SET_SEED};
pub use trainer::{
    AgentLogRow, AgentSpec, AgentTrainer, DataSource, HeldOutRecord, Member, ModelSpec, ModelTrainer, SeedState,
    TrainingPlan,
};
