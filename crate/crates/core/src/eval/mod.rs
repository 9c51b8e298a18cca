//! Seeded rollouts, the multi-agent evaluation protocol, ablations and
//! report files.

mod ablation;
mod metrics;
mod protocol;
mod report;
mod rollout;

pub use ablation::{bar_chart_svg, parse_ablation_csv, run_ablation, AblationArm, AblationKind, AblationResult, AblationRow};
pub use metrics::{format_pm, mean_std, Aggregate, RolloutRecord, SeedMetrics};
pub use protocol::{load_or_generate_dataset, load_or_train_encoder, prepare, run_protocol, train_policy, Prepared};
pub use report::{AgentReport, Aggregates, BaselineReport, EvalReport, Stamp};
pub use rollout::{
    evaluate, evaluate_random, evaluate_with, rollout, rollout_seed, rollout_with, Controller, PolicyController,
    RandomController, RolloutResult, TraceStep,
};
