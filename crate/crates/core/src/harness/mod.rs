//! Experiment plumbing: versioned JSON configs, seeded end-to-end runs with
//! one JSON log per run, parameter sweeps and summary reports.

mod config;
mod report;
mod run;
mod sweep;

pub use config::{
    AugmentSpec, ConfidentSettings, DatasetSpec, ExperimentConfig, Mode, PesSettings, ProfileSettings, CONFIG_VERSION,
};
pub use report::{render_csv, render_markdown, report, ConditionSummary, ReportOutput, MetricSummary};
pub use run::{
    generate_dataset, initial_network, prepare_data, prepare_output_dir, read_run_logs, run_experiment, run_log_name,
    run_profile, run_seed, write_run_log, ProfileLog, RunLog, RunResult, SeedData, RUN_LOG_FORMAT,
};
pub use sweep::{aggregate, mark_best, set_path, sweep, sweep_point, sweep_svg, write_sweep_csv, SweepRow};
