//! Configuration, run directories and the end-to-end commands behind the
//! command-line tool.

mod commands;
mod config;
mod manifest;
mod preview;

pub use commands::{
    cmd_ablation, cmd_evaluate, cmd_pseudo_preview, cmd_stability, cmd_train, load_dataset,
    load_run_generators, phase_two_checkpoint, write_evaluation, AblationColumn, AblationTable,
    Dataset, StabilitySeries, ABLATION_CSV, ABLATION_JSON, HISTOGRAM_FILE, LOSS_LOG, PREVIEW_PNG,
    REPORT_FILE, SCORES_FILE, STABILITY_CSV, STABILITY_SERIES,
};
pub use config::{parse_config, ExperimentConfig, GOldKind, ProtocolKind, DATA_ROOT_ENV};
pub use manifest::{
    CheckpointIndex, Run, RunLock, RunManifest, StageTiming, CONFIG_FILE, LOCK_FILE, MANIFEST_FILE,
};
pub use preview::{pseudo_stages, save_grid};
