//! Plan-execute-monitor loop with exception classification and recovery.

mod agent;
mod bench;
mod frames;
mod oracle;
mod types;

use thiserror::Error;

pub use agent::{run_episode, EpisodeRun};
pub use bench::{
    csv_string, failure_histogram, generate_suite, run_suite, success_rate, summary_table,
    write_csv, write_plan_times, EpisodeOutcome, SuiteEpisode,
};
pub use frames::dump_frame;
pub use oracle::{
    belief_atoms, condition_vector, execute_plan, oracle_length, oracle_run, OracleRun, Recorder,
};
pub use types::{
    classify_exception, recover, Budget, EpisodeSummary, ExceptionKind, ExceptionRecord,
    ExecConfig, FailureCategory, Incident, Phase, PlanStat, RecoveryContext, RecoveryDecision,
    TraceRecord,
};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("oracle solver failed: {0}")]
    Oracle(String),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
}

/// Writes the trace as JSON lines.
pub fn write_trace(path: &std::path::Path, trace: &[TraceRecord]) -> std::io::Result<()> {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).map_err(std::io::Error::other)?);
        out.push('\n');
    }
    std::fs::write(path, out)
}

#[cfg(test)]
mod tests;
