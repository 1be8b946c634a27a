//! Configured experiment runs: post-classification, direct change,
//! modality ablation and synthetic end-to-end checks.

mod config;
mod output;
mod pipeline;

pub use config::{
    ChangeMapKind, EvaluateRole, ExperimentConfig, Inputs, LadderLevel, Paradigm, SplitConfig, SyntheticConfig,
    TaxonomyConfig, TilingConfig, BUNDLED_SYNTHETIC_CONFIG, SCHEMA_VERSION,
};
pub use output::{
    ablation_csv, confusion_csv, execute, report_csv, report_json, write_outputs, TOOL_NAME, TOOL_VERSION,
};
pub use pipeline::{
    direct_change, evaluate, evaluation_region, load_label_raster, post_classification, run_ablation,
    run_direct_change, run_experiment, run_post_classification, run_synthetic, run_synthetic_end_to_end, AblationRow,
    Evaluation, InputRecord, RunResult, Task, Taxonomy,
};
