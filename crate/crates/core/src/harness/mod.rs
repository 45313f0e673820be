//! Experiment configs, training runs, multi-seed summaries and CSV output.

mod config;
mod summary;
mod train;

pub use config::{
    parse_overrides, parse_pairs, DatasetSpec, ExperimentConfig, Metric, Variant, DATA_DIR_ENV,
};
pub use summary::{
    emit_csv, format_sig6, mean_std, read_summary_csv, repeat_runs, summarize, write_records_csv,
    write_summary_csv, AbortedRun, SummaryRow, SummaryTable, VariantRuns, SUMMARY_HEADER,
};
pub use train::{
    evaluate, load_datasets, run_experiment, run_on, AbortDiagnostic, MetricsRecord, RunOutcome,
    NORM_HISTORY,
};
