//! CSV outputs of the experiment harness.

use std::path::Path;

use super::run::{ExperimentResult, RegretRecord};
use crate::error::{Error, Result};
use crate::fire::ParamSchedule;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REGRET_FILE: &str = "regret.csv";
pub const STEPS_FILE: &str = "steps.csv";
pub const INCIDENTS_FILE: &str = "incidents.csv";
pub const TIMING_FILE: &str = "timing.csv";

/// `algorithm,T,mean_regret,se` at every checkpoint and the horizon.
pub fn write_summary(path: &Path, record: &RegretRecord, checkpoints: &[usize]) -> Result<()> {
    let mut times: Vec<usize> = checkpoints.to_vec();
    times.push(record.horizon);
    times.sort_unstable();
    times.dedup();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "T", "mean_regret", "se"])?;
    for alg in &record.algorithms {
        for &t in &times {
            let (m, se) = record.at(*alg, t).expect("checkpoint within horizon");
            w.write_record([
                alg.name().to_string(),
                t.to_string(),
                m.to_string(),
                se.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `t,algorithm,mean_regret,se` for every period.
pub fn write_regret(path: &Path, record: &RegretRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "algorithm", "mean_regret", "se"])?;
    for t in 1..=record.horizon {
        for (a, alg) in record.algorithms.iter().enumerate() {
            w.write_record([
                t.to_string(),
                alg.name().to_string(),
                record.mean[a][t - 1].to_string(),
                record.se[a][t - 1].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_steps(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "sequence",
        "rep",
        "t",
        "algorithm",
        "detected_changes_plus",
        "detected_changes_minus",
        "episode_starts",
        "expected_cost",
        "regret_increment",
    ])?;
    for r in &result.replications {
        for s in &r.steps {
            w.write_record([
                s.sequence.to_string(),
                s.rep.to_string(),
                s.t.to_string(),
                s.algorithm.name().to_string(),
                s.detected_plus.to_string(),
                s.detected_minus.to_string(),
                s.episode_starts.clone(),
                s.expected_cost.to_string(),
                s.regret_increment.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_incidents(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sequence", "rep", "t", "algorithm"])?;
    for i in result.replications.iter().flat_map(|r| &r.incidents) {
        w.write_record([
            i.sequence.to_string(),
            i.rep.to_string(),
            i.t.to_string(),
            i.algorithm.name().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Wall-clock seconds per replication and for the whole run.
pub fn write_timing(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sequence", "rep", "seconds"])?;
    for r in &result.replications {
        w.write_record([
            r.sequence.to_string(),
            r.rep.to_string(),
            format!("{:.3}", r.seconds),
        ])?;
    }
    w.write_record([
        "total".to_string(),
        String::new(),
        format!("{:.3}", result.seconds),
    ])?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the summary, regret curve, incidents and timing files into
/// `dir`, plus the step log when it was recorded.
pub fn write_outputs(
    dir: &Path,
    result: &ExperimentResult,
    checkpoints: &[usize],
    step_log: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_summary(&dir.join(SUMMARY_FILE), &result.record, checkpoints)?;
    write_regret(&dir.join(REGRET_FILE), &result.record)?;
    write_incidents(&dir.join(INCIDENTS_FILE), result)?;
    write_timing(&dir.join(TIMING_FILE), result)?;
    if step_log {
        write_steps(&dir.join(STEPS_FILE), result)?;
    }
    Ok(())
}

/// `stream,h,start,value`: one row per constant segment, 1-based areas.
pub fn write_schedule_csv(path: &Path, schedule: &ParamSchedule) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["stream", "h", "start", "value"])?;
    for (stream, segs) in [("plus", &schedule.plus), ("minus", &schedule.minus)] {
        for (h, s) in segs.iter().enumerate() {
            for &(start, value) in s.segments() {
                w.write_record([
                    stream.to_string(),
                    (h + 1).to_string(),
                    start.to_string(),
                    value.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
