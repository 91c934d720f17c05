//! Experiment orchestration, sweeps, persistence and reporting.

mod config;
mod report;
mod results;
mod run;
mod sweep;

pub use config::{
    get_path, parse_override, set_path, DataConfig, EvalConfig, ExperimentConfig, OutputConfig,
};
pub use report::{
    best_settings, build_report, curve_rows, format_mean_std, method_summaries, BestSetting,
    MethodSummary, ReportOutput,
};
pub use results::{
    method_hyperparameter, read_run_jsonl, read_summary_csv, read_sweep, read_sweep_trials,
    sweep_paths, write_run, write_run_jsonl, write_summary_csv, write_sweep, SummaryRow,
};
pub use run::{load_source, run_experiment, run_experiment_on, run_on_tasks, CurvePoint, RunRecord};
pub use sweep::{
    apply_axis_value, mean_std, sweep, sweep_on, sweep_on_tasks, window_stats, Axis, Objective,
    SweepResult, SweepSpec, Trial, WindowPoint, DEFAULT_WINDOW,
};
