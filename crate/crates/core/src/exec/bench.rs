//! Episode suites: generation, parallel execution and reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::planner::Planner;
use crate::sim::{generate_scene, Difficulty, GeneratedEpisode, SimError, TaskTemplate};

use super::agent::{run_episode, EpisodeRun};
use super::{ExecConfig, ExecError};

/// One suite entry; the on-disk format of a suite directory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEpisode {
    pub name: String,
    pub seed: u64,
    pub episode: GeneratedEpisode,
}

/// Result of one suite entry. An `Err` is an episode that could not be run.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub name: String,
    pub task: String,
    pub seed: u64,
    pub run: Result<EpisodeRun, String>,
}

impl EpisodeOutcome {
    pub fn success(&self) -> bool {
        self.run.as_ref().is_ok_and(|r| r.summary.report.success)
    }
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool")
}

/// `per_template` episodes for every template, seeds `base_seed..`.
pub fn generate_suite(
    templates: &[TaskTemplate],
    per_template: u32,
    base_seed: u64,
    diff: Difficulty,
    jobs: usize,
) -> Result<Vec<SuiteEpisode>, SimError> {
    let keys: Vec<(TaskTemplate, u64)> = templates
        .iter()
        .flat_map(|&t| (0..per_template as u64).map(move |i| (t, base_seed + i)))
        .collect();
    pool(jobs).install(|| {
        keys.par_iter()
            .map(|&(template, seed)| {
                generate_scene(template, seed, diff).map(|episode| SuiteEpisode {
                    name: format!("{template}_{seed:04}"),
                    seed,
                    episode,
                })
            })
            .collect()
    })
}

/// Runs every episode with its ground-truth subgoals. The simulator seed of
/// an episode depends only on `cfg.seed` and the episode seed, so runs under
/// different configurations are paired. Episode errors are recorded in the
/// outcome instead of aborting the suite; outcomes keep the suite order.
pub fn run_suite(
    suite: &[SuiteEpisode],
    planner: &Planner,
    cfg: &ExecConfig,
    jobs: usize,
) -> Vec<EpisodeOutcome> {
    pool(jobs).install(|| {
        suite
            .par_iter()
            .map(|e| {
                let run = run_one(e, planner, cfg).map_err(|err| err.to_string());
                EpisodeOutcome {
                    name: e.name.clone(),
                    task: e.episode.task.name.clone(),
                    seed: e.seed,
                    run,
                }
            })
            .collect()
    })
}

fn run_one(e: &SuiteEpisode, planner: &Planner, cfg: &ExecConfig) -> Result<EpisodeRun, ExecError> {
    let subgoals = e.episode.task.subgoals()?;
    let mut c = cfg.clone();
    c.seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(e.seed);
    run_episode(
        &e.episode.scene,
        &e.episode.task,
        &subgoals,
        planner,
        &c,
        e.episode.reference_length,
    )
}

pub fn success_rate(outcomes: &[EpisodeOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| o.success()).count() as f64 / outcomes.len() as f64
}

/// Failure category counts; unrunnable episodes count as `Error`.
pub fn failure_histogram(outcomes: &[EpisodeOutcome]) -> BTreeMap<String, u32> {
    let mut h = BTreeMap::new();
    for o in outcomes {
        let key = match &o.run {
            Ok(r) => match r.summary.failure {
                Some(f) => f.to_string(),
                None => continue,
            },
            Err(_) => "Error".to_string(),
        };
        *h.entry(key).or_default() += 1;
    }
    h
}

#[derive(Debug, Serialize)]
struct CsvRow {
    name: String,
    task: String,
    seed: u64,
    success: bool,
    goal_condition_rate: f64,
    trajectory_length: u32,
    reference_length: u32,
    plw_success: f64,
    plw_goal_condition_rate: f64,
    failure: String,
    failed_actions: u32,
    exceptions: u32,
    recoveries: u32,
    plans: u32,
    plan_expansions: u64,
}

/// One row per episode; contains no wall-clock values.
pub fn csv_string(outcomes: &[EpisodeOutcome]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in outcomes {
        let row = match &o.run {
            Ok(run) => {
                let s = &run.summary;
                CsvRow {
                    name: o.name.clone(),
                    task: o.task.clone(),
                    seed: o.seed,
                    success: s.report.success,
                    goal_condition_rate: s.report.goal_condition_rate,
                    trajectory_length: s.report.trajectory_length,
                    reference_length: s.report.reference_length,
                    plw_success: s.report.plw_success,
                    plw_goal_condition_rate: s.report.plw_goal_condition_rate,
                    failure: s.failure.map(|f| f.to_string()).unwrap_or_default(),
                    failed_actions: s.failed_actions,
                    exceptions: s.exceptions.values().sum(),
                    recoveries: s.recoveries.values().sum(),
                    plans: s.plans,
                    plan_expansions: s.plan_expansions,
                }
            }
            Err(e) => CsvRow {
                name: o.name.clone(),
                task: o.task.clone(),
                seed: o.seed,
                success: false,
                goal_condition_rate: 0.0,
                trajectory_length: 0,
                reference_length: 0,
                plw_success: 0.0,
                plw_goal_condition_rate: 0.0,
                failure: format!("Error: {e}"),
                failed_actions: 0,
                exceptions: 0,
                recoveries: 0,
                plans: 0,
                plan_expansions: 0,
            },
        };
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(path: &Path, outcomes: &[EpisodeOutcome]) -> std::io::Result<()> {
    std::fs::write(path, csv_string(outcomes).map_err(std::io::Error::other)?)
}

/// Planner wall times, one row per planner call; not reproducible.
pub fn write_plan_times(path: &Path, outcomes: &[EpisodeOutcome]) -> std::io::Result<()> {
    let mut out = String::from("name,seed,call,elapsed_ms,expansions,grounded_actions,solved\n");
    for o in outcomes {
        let Ok(run) = &o.run else { continue };
        for (i, p) in run.plan_stats.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{:.3},{},{},{}",
                o.name,
                o.seed,
                i,
                p.elapsed.as_secs_f64() * 1e3,
                p.expansions,
                p.grounded_actions,
                p.solved
            );
        }
    }
    std::fs::write(path, out)
}

/// Per-task aggregate table; unrunnable episodes count as zero.
pub fn summary_table(outcomes: &[EpisodeOutcome]) -> String {
    #[derive(Default)]
    struct Agg {
        n: u32,
        sr: f64,
        gc: f64,
        plw_sr: f64,
        plw_gc: f64,
        steps: u64,
    }
    let mut by: BTreeMap<String, Agg> = BTreeMap::new();
    for o in outcomes {
        for key in [o.task.clone(), "ALL".to_string()] {
            let a = by.entry(key).or_default();
            a.n += 1;
            if let Ok(run) = &o.run {
                let r = &run.summary.report;
                a.sr += r.success as u8 as f64;
                a.gc += r.goal_condition_rate;
                a.plw_sr += r.plw_success;
                a.plw_gc += r.plw_goal_condition_rate;
                a.steps += r.trajectory_length as u64;
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>4} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "task", "n", "SR", "GC", "PLW-SR", "PLW-GC", "steps"
    );
    let all = by.remove("ALL");
    let rows = by
        .iter()
        .map(|(k, a)| (k.as_str(), a))
        .chain(all.as_ref().map(|a| ("ALL", a)));
    for (k, a) in rows {
        let n = a.n.max(1) as f64;
        let _ = writeln!(
            out,
            "{:<12} {:>4} {:>6.1}% {:>6.1}% {:>6.1}% {:>6.1}% {:>7.1}",
            k,
            a.n,
            100.0 * a.sr / n,
            100.0 * a.gc / n,
            100.0 * a.plw_sr / n,
            100.0 * a.plw_gc / n,
            a.steps as f64 / n
        );
    }
    out
}
