use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::Serialize;

use crate::geom::Pose;
use crate::monitor::SubgoalState;
use crate::nav::NavError;
use crate::planner::{PlanOutcome, DEFAULT_TIMEOUT};
use crate::sim::{ActionResult, FailureReason, MetricsReport, NoiseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Detected before an action could be issued.
    PreExecution,
    /// Detected from the outcome of an issued action.
    PostExecution,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ExceptionKind {
    NoPlanFound,
    TargetUnreachable,
    TargetNotVisible,
    PathBlocked,
    ObjectNotFoundAfterSearch,
    ReceptacleFull,
    HandOccupied,
    NoEffectObserved,
    SimulatorRejection(String),
}

impl ExceptionKind {
    pub fn phase(&self) -> Phase {
        use ExceptionKind::*;
        match self {
            NoPlanFound
            | TargetUnreachable
            | TargetNotVisible
            | PathBlocked
            | ObjectNotFoundAfterSearch => Phase::PreExecution,
            ReceptacleFull | HandOccupied | NoEffectObserved | SimulatorRejection(_) => {
                Phase::PostExecution
            }
        }
    }

    pub fn name(&self) -> &'static str {
        use ExceptionKind::*;
        match self {
            NoPlanFound => "NoPlanFound",
            TargetUnreachable => "TargetUnreachable",
            TargetNotVisible => "TargetNotVisible",
            PathBlocked => "PathBlocked",
            ObjectNotFoundAfterSearch => "ObjectNotFoundAfterSearch",
            ReceptacleFull => "ReceptacleFull",
            HandOccupied => "HandOccupied",
            NoEffectObserved => "NoEffectObserved",
            SimulatorRejection(_) => "SimulatorRejection",
        }
    }

    /// Failure category charged when this exception ends a subgoal.
    pub fn category(&self) -> FailureCategory {
        use ExceptionKind::*;
        match self {
            NoPlanFound => FailureCategory::PlanNotFound,
            ObjectNotFoundAfterSearch => FailureCategory::ObjectNotFound,
            TargetNotVisible => FailureCategory::GroundingFailure,
            ReceptacleFull | HandOccupied | NoEffectObserved | SimulatorRejection(_) => {
                FailureCategory::InteractionFailure
            }
            TargetUnreachable | PathBlocked => FailureCategory::Other,
        }
    }
}

impl fmt::Display for ExceptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExceptionKind::SimulatorRejection(r) => write!(f, "SimulatorRejection({r})"),
            k => f.write_str(k.name()),
        }
    }
}

/// Unrecoverable error class of a failed episode. Declaration order is the
/// priority order used when several apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum FailureCategory {
    SubgoalPrediction,
    PlanNotFound,
    ObjectNotFound,
    GroundingFailure,
    InteractionFailure,
    Other,
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Something that went wrong while planning or acting.
#[derive(Debug, Clone, Copy)]
pub enum Incident<'a> {
    Plan(&'a PlanOutcome),
    Nav(&'a NavError),
    /// The environment rejected an issued action.
    Env(&'a ActionResult),
    /// A navigation target vanished from the instance table.
    TargetLost,
    /// The action succeeded but its expected effect was not perceived.
    Unverified,
}

/// Deterministic mapping from incidents to exception kinds; `None` when the
/// incident is not exceptional.
pub fn classify_exception(incident: Incident<'_>) -> Option<ExceptionKind> {
    use ExceptionKind::*;
    match incident {
        Incident::Plan(PlanOutcome::NoSolution | PlanOutcome::Timeout) => Some(NoPlanFound),
        Incident::Plan(_) => None,
        Incident::Nav(NavError::Unreachable) => Some(PathBlocked),
        Incident::Nav(NavError::NotVisible) => Some(TargetNotVisible),
        Incident::Nav(NavError::NoFrontier) => Some(ObjectNotFoundAfterSearch),
        Incident::Env(r) if r.success => None,
        Incident::Env(r) => Some(match r.reason {
            Some(FailureReason::ReceptacleFull) => ReceptacleFull,
            Some(FailureReason::HandOccupied) => HandOccupied,
            Some(FailureReason::Blocked) => PathBlocked,
            Some(other) => SimulatorRejection(other.to_string()),
            None => SimulatorRejection("unknown".into()),
        }),
        Incident::TargetLost => Some(TargetUnreachable),
        Incident::Unverified => Some(NoEffectObserved),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryDecision {
    /// Move the occupant out of the receptacle, then resume.
    ClearReceptacle {
        receptacle: String,
        occupant: String,
    },
    /// Put the held object down, then resume.
    PutDown,
    /// Turn or approach to bring the target back into view.
    Reground,
    /// Mark the obstruction in the grid and plan a new path.
    RebuildPath,
    /// Issue the same action once more.
    Retry,
    Replan,
    RetryUnpruned,
    Abandon,
}

impl RecoveryDecision {
    pub fn name(&self) -> &'static str {
        match self {
            RecoveryDecision::ClearReceptacle { .. } => "clear-receptacle",
            RecoveryDecision::PutDown => "put-down",
            RecoveryDecision::Reground => "reground",
            RecoveryDecision::RebuildPath => "rebuild-path",
            RecoveryDecision::Retry => "retry",
            RecoveryDecision::Replan => "replan",
            RecoveryDecision::RetryUnpruned => "retry-unpruned",
            RecoveryDecision::Abandon => "abandon",
        }
    }
}

impl fmt::Display for RecoveryDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecoveryDecision::ClearReceptacle {
                receptacle,
                occupant,
            } => {
                write!(f, "clear-receptacle {occupant} from {receptacle}")
            }
            other => f.write_str(other.name()),
        }
    }
}

/// What the executor knows when choosing a recovery.
#[derive(Debug, Clone, Default)]
pub struct RecoveryContext {
    pub replanning: bool,
    pub replans_used: u32,
    pub replan_cap: u32,
    /// The failed action was already retried once.
    pub retried: bool,
    /// Re-grounding was already attempted for this action.
    pub regrounded: bool,
    /// Planning ran with pruning and may be retried without it.
    pub pruned: bool,
    /// (receptacle, occupant) for a full receptacle.
    pub occupant: Option<(String, String)>,
}

/// Exception decision tree.
pub fn recover(kind: &ExceptionKind, ctx: &RecoveryContext) -> RecoveryDecision {
    use ExceptionKind::*;
    use RecoveryDecision as D;
    if !ctx.replanning || ctx.replans_used >= ctx.replan_cap {
        return D::Abandon;
    }
    match kind {
        ReceptacleFull => match &ctx.occupant {
            Some((r, o)) => D::ClearReceptacle {
                receptacle: r.clone(),
                occupant: o.clone(),
            },
            None => D::Replan,
        },
        TargetNotVisible if !ctx.regrounded => D::Reground,
        PathBlocked => D::RebuildPath,
        HandOccupied => D::PutDown,
        NoEffectObserved if !ctx.retried => D::Retry,
        ObjectNotFoundAfterSearch => D::Abandon,
        NoPlanFound if ctx.pruned => D::RetryUnpruned,
        NoPlanFound => D::Abandon,
        TargetNotVisible | TargetUnreachable | NoEffectObserved | SimulatorRejection(_) => {
            D::Replan
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Budget {
    pub max_steps: u32,
    pub max_failures: u32,
    pub subgoal_steps: u32,
    pub replans: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_steps: 1000,
            max_failures: 30,
            subgoal_steps: 200,
            replans: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExecConfig {
    pub budget: Budget,
    pub timeout: Duration,
    pub pruning: bool,
    /// Exception recovery; when off any exception abandons the subgoal.
    pub replanning: bool,
    /// Execute only the final subgoal.
    pub last_subgoal_only: bool,
    /// Plan over unobserved-object placeholders and search for them.
    pub search: bool,
    pub noise: NoiseConfig,
    pub seed: u64,
    pub dump_plans: Option<PathBuf>,
    pub dump_frames: Option<PathBuf>,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            budget: Budget::default(),
            timeout: DEFAULT_TIMEOUT,
            pruning: true,
            replanning: true,
            last_subgoal_only: false,
            search: true,
            noise: NoiseConfig::default(),
            seed: 0,
            dump_plans: None,
            dump_frames: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceptionRecord {
    pub kind: ExceptionKind,
    pub phase: Phase,
}

/// One line of the episode trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: u32,
    pub pose: Pose,
    /// None for records of exceptions raised without issuing an action.
    pub action: Option<String>,
    pub result: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exception: Option<ExceptionRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<String>,
    pub active_subgoal: Option<String>,
    pub plan_remaining: usize,
    pub belief_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EpisodeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    #[serde(flatten)]
    pub report: MetricsReport,
    pub failure: Option<FailureCategory>,
    pub steps: u32,
    pub failed_actions: u32,
    pub subgoals: Vec<SubgoalState>,
    pub exceptions: BTreeMap<String, u32>,
    pub recoveries: BTreeMap<String, u32>,
    pub plans: u32,
    pub plan_expansions: u64,
}

/// Wall-clock statistics of one planner call; kept out of the trace so
/// traces stay reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStat {
    pub elapsed: Duration,
    pub expansions: u64,
    pub grounded_actions: usize,
    pub solved: bool,
}
