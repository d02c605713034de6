//! Subgoal-level symbolic planning: scene pruning, problem construction with
//! unobserved-object dummies, grounding, and heuristic search.

mod belief;
mod problem;
mod relevance;
mod search;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::affordance::AffordanceTable;
use crate::monitor::Subgoal;
use crate::pddl::{
    ground_with, parse_domain, write_problem, DomainModel, GroundOptions, PddlError, ProblemModel,
};

pub use belief::{dummy_id, euclid, is_dummy, ordinal, split_id, Belief, BeliefInstance};
pub use problem::{
    bind_goal, build_problem, inject_unobserved, prune_scene, GoalBinding, DYNAMIC_STATES,
    INTERACT_DIST,
};
pub use relevance::{RelevanceEntry, RelevanceTable};
pub use search::{
    plan_from_indices, search_plan, search_plan_with, validate_plan, MidAction, MidLevelPlan,
    PlanOutcome, PlanVerdict, SearchConfig, SearchStats,
};

pub const HOUSEHOLD_DOMAIN: &str = include_str!("household.pddl");
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error("no relevance entry for predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown category `{0}` in relevance table")]
    UnknownCategory(String),
    #[error("invalid planner configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub timeout: Duration,
    pub allow_unobserved: bool,
    pub prune: bool,
    pub search: SearchConfig,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            timeout: DEFAULT_TIMEOUT,
            allow_unobserved: true,
            prune: true,
            search: SearchConfig::default(),
        }
    }
}

/// One subgoal plus the belief it is planned against.
#[derive(Debug, Clone, Copy)]
pub struct PlanRequest<'a> {
    pub subgoal: &'a Subgoal,
    pub belief: &'a Belief,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub outcome: PlanOutcome,
    pub binding: GoalBinding,
    pub problem: ProblemModel,
    pub grounded_actions: usize,
    pub stats: SearchStats,
    pub elapsed: Duration,
}

/// Domain plus configuration tables; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Planner {
    pub domain: DomainModel,
    pub relevance: RelevanceTable,
    pub affordances: AffordanceTable,
}

impl Planner {
    pub fn household() -> Self {
        Planner {
            domain: parse_domain(HOUSEHOLD_DOMAIN).expect("built-in domain parses"),
            relevance: RelevanceTable::default(),
            affordances: AffordanceTable::household(),
        }
    }

    /// Builds the problem for a request without solving it.
    pub fn problem(
        &self,
        req: PlanRequest<'_>,
        opts: &PlanOptions,
    ) -> Result<(ProblemModel, GoalBinding), PlannerError> {
        let kept: BTreeSet<String> = if opts.prune {
            prune_scene(req.belief, req.subgoal, &self.relevance, &self.affordances)?
        } else {
            req.belief.instances.iter().map(|i| i.id.clone()).collect()
        };
        let (mut problem, binding) = build_problem(
            req.belief,
            &kept,
            req.subgoal,
            &self.domain.name,
            &self.affordances,
        );
        if opts.allow_unobserved {
            problem = inject_unobserved(
                problem,
                req.subgoal,
                &self.relevance,
                &self.affordances,
                req.belief,
            )?;
        }
        Ok((problem, binding))
    }

    /// Prune, build, ground and search under the request's timeout.
    pub fn plan(
        &self,
        req: PlanRequest<'_>,
        opts: &PlanOptions,
    ) -> Result<PlanResult, PlannerError> {
        let start = Instant::now();
        let (problem, binding) = self.problem(req, opts)?;
        let ground_opts = GroundOptions {
            static_filter: true,
            ..GroundOptions::default()
        };
        let task = ground_with(&self.domain, &problem, ground_opts)?;
        let remaining = opts.timeout.saturating_sub(start.elapsed());
        let (outcome, stats) = if remaining.is_zero() {
            (PlanOutcome::Timeout, SearchStats::default())
        } else {
            search_plan_with(&task, remaining, opts.search)
        };
        Ok(PlanResult {
            outcome,
            binding,
            grounded_actions: task.actions.len(),
            problem,
            stats,
            elapsed: start.elapsed(),
        })
    }
}

/// Writes `<stem>.pddl` and `<stem>.plan` (one action per line) into `dir`.
pub fn dump_plan(dir: &Path, stem: &str, result: &PlanResult) -> Result<(), PlannerError> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(format!("{stem}.pddl")),
        write_problem(&result.problem),
    )?;
    let body = match &result.outcome {
        PlanOutcome::Solved(p) => {
            let mut s: String = p.actions.iter().map(|a| format!("{a}\n")).collect();
            s.push_str(&format!("; cost {}\n", p.cost));
            s
        }
        PlanOutcome::GoalAlreadySatisfied => "; goal already satisfied\n".to_string(),
        PlanOutcome::NoSolution => "; no solution\n".to_string(),
        PlanOutcome::Timeout => "; timeout\n".to_string(),
    };
    fs::write(dir.join(format!("{stem}.plan")), body)?;
    Ok(())
}

#[cfg(test)]
mod tests;
