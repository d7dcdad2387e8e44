//! Experiment orchestration: evaluation suites, result tables, experiment
//! specs with idempotent stages, and the paper's experiment recipes.

mod eval;
mod experiment;
mod recipes;
mod report;
mod table;

pub use eval::{
    evaluate, even_split, run_entry, EnvResult, EvalContext, EvalEntry, EvalSuite, ResultRow, Stat, DEFAULT_EVAL_SEEDS,
    DEFAULT_UE_TOTALS,
};
pub use table::ResultTable;
pub use experiment::{
    checkpoint_path, run_experiment, stage_error, trained_policy_name, CollectStage, EvalStage, ExperimentSpec,
    Manifest, RunSummary, StageRecord, TrainStage, EVAL_EPISODES,
};
pub use recipes::{reward_variant_flags, reward_variant_spec, SlaTransferPlan, PAPER_REWARD_VARIANTS};
pub use report::{read_eval_curve, report, ReportSummary};
