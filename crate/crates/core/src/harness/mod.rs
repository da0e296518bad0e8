//! Training orchestration, evaluation metrics, ablations and file outputs.

pub mod config;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod stage1;
pub mod stage2;
pub mod synth;

pub use config::{AblationFlags, RunConfig};
pub use metrics::{micro_f1, per_type_metrics, pr_curve, subset_report, MetricsReport};
pub use pipeline::{run_ablation_grid, run_pipeline, PipelineOutput};
pub use stage1::{train_stage1, Stage1Output};
pub use stage2::{evaluate, train_stage2, EvalSet, Stage2Output};
