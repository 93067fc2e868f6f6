//! Experiment orchestration: configurations, replicated regret runs and
//! their CSV outputs.

mod config;
mod output;
mod run;

pub use config::{ieee_configs, ConfigBase, ExperimentConfig, BUILTIN_PREFIX};
pub use output::{
    write_incidents, write_outputs, write_regret, write_schedule_csv, write_steps, write_summary,
    write_timing, INCIDENTS_FILE, REGRET_FILE, STEPS_FILE, SUMMARY_FILE, TIMING_FILE,
};
pub use run::{
    choose_origins, replication_streams, run_experiment, run_replication, sequence_schedule,
    theorem2_bound, ExperimentResult, Incident, RegretRecord, ReplicationResult, RunOptions,
    Setting, StepRecord,
};
