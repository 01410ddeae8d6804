//! Sparse system-identification experiments: scenario generation, runs,
//! averaging and output files.

mod config;
mod experiment;
pub mod invariants;
mod output;
mod scenario;

pub use config::{
    Arm, ArmKind, ExperimentConfig, LearnerSettings, NoiseSpec, Preset, RegressorModel, TopologySpec,
};
pub use experiment::{
    run_experiment, run_experiment_with_threads, simulate_arm, ArmTrace, ExperimentOutput, MetricsRecord,
};
pub use output::{
    emit_plot_script, format_float, read_summary_csv, summary_csv, write_outputs, SummaryRow, CSV_HEADER,
};
pub use scenario::{generate_scenario, rng_stream, MeasurementSource, Scenario};
