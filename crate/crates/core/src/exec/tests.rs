use super::*;
use crate::nav::NavError;
use crate::planner::{PlanOutcome, Planner};
use crate::sim::{generate_scene, ActionResult, Difficulty, FailureReason, TaskTemplate};

fn env_fail(reason: FailureReason) -> ActionResult {
    ActionResult {
        success: false,
        reason: Some(reason),
    }
}

#[test]
fn incidents_classify_deterministically() {
    use ExceptionKind::*;
    let ok = ActionResult {
        success: true,
        reason: None,
    };
    let cases: Vec<(Incident<'_>, Option<ExceptionKind>)> = vec![
        (Incident::Plan(&PlanOutcome::NoSolution), Some(NoPlanFound)),
        (Incident::Plan(&PlanOutcome::Timeout), Some(NoPlanFound)),
        (Incident::Nav(&NavError::Unreachable), Some(PathBlocked)),
        (Incident::Nav(&NavError::NotVisible), Some(TargetNotVisible)),
        (
            Incident::Nav(&NavError::NoFrontier),
            Some(ObjectNotFoundAfterSearch),
        ),
        (Incident::Env(&ok), None),
        (Incident::TargetLost, Some(TargetUnreachable)),
        (Incident::Unverified, Some(NoEffectObserved)),
    ];
    for (incident, want) in cases {
        assert_eq!(classify_exception(incident), want, "{incident:?}");
    }
    let full = env_fail(FailureReason::ReceptacleFull);
    assert_eq!(
        classify_exception(Incident::Env(&full)),
        Some(ReceptacleFull)
    );
    let hand = env_fail(FailureReason::HandOccupied);
    assert_eq!(classify_exception(Incident::Env(&hand)), Some(HandOccupied));
    let blocked = env_fail(FailureReason::Blocked);
    assert_eq!(
        classify_exception(Incident::Env(&blocked)),
        Some(PathBlocked)
    );
    let far = env_fail(FailureReason::NotNear);
    assert_eq!(
        classify_exception(Incident::Env(&far)),
        Some(SimulatorRejection(FailureReason::NotNear.to_string()))
    );
}

#[test]
fn phases_split_pre_and_post_execution() {
    use ExceptionKind::*;
    for k in [
        NoPlanFound,
        TargetUnreachable,
        TargetNotVisible,
        PathBlocked,
        ObjectNotFoundAfterSearch,
    ] {
        assert_eq!(k.phase(), Phase::PreExecution, "{k}");
    }
    for k in [
        ReceptacleFull,
        HandOccupied,
        NoEffectObserved,
        SimulatorRejection("x".into()),
    ] {
        assert_eq!(k.phase(), Phase::PostExecution, "{k}");
    }
}

fn ctx() -> RecoveryContext {
    RecoveryContext {
        replanning: true,
        replans_used: 0,
        replan_cap: 5,
        ..RecoveryContext::default()
    }
}

#[test]
fn recovery_decision_tree() {
    use ExceptionKind::*;
    use RecoveryDecision as D;
    let occupied = RecoveryContext {
        occupant: Some(("Sink_0".into(), "Pan_0".into())),
        ..ctx()
    };
    assert_eq!(
        recover(&ReceptacleFull, &occupied),
        D::ClearReceptacle {
            receptacle: "Sink_0".into(),
            occupant: "Pan_0".into()
        }
    );
    assert_eq!(recover(&ReceptacleFull, &ctx()), D::Replan);
    assert_eq!(recover(&HandOccupied, &ctx()), D::PutDown);
    assert_eq!(recover(&NoEffectObserved, &ctx()), D::Retry);
    let retried = RecoveryContext {
        retried: true,
        ..ctx()
    };
    assert_eq!(recover(&NoEffectObserved, &retried), D::Replan);
    assert_eq!(recover(&TargetNotVisible, &ctx()), D::Reground);
    let regrounded = RecoveryContext {
        regrounded: true,
        ..ctx()
    };
    assert_eq!(recover(&TargetNotVisible, &regrounded), D::Replan);
    assert_eq!(recover(&PathBlocked, &ctx()), D::RebuildPath);
    let pruned = RecoveryContext {
        pruned: true,
        ..ctx()
    };
    assert_eq!(recover(&NoPlanFound, &pruned), D::RetryUnpruned);
    assert_eq!(recover(&NoPlanFound, &ctx()), D::Abandon);
    assert_eq!(recover(&ObjectNotFoundAfterSearch, &ctx()), D::Abandon);
    assert_eq!(recover(&TargetUnreachable, &ctx()), D::Replan);
    assert_eq!(recover(&SimulatorRejection("x".into()), &ctx()), D::Replan);
}

#[test]
fn recovery_abandons_without_replanning_budget() {
    use ExceptionKind::*;
    let off = RecoveryContext {
        replanning: false,
        ..ctx()
    };
    let spent = RecoveryContext {
        replans_used: 5,
        ..ctx()
    };
    for k in [
        ReceptacleFull,
        HandOccupied,
        NoEffectObserved,
        PathBlocked,
        TargetNotVisible,
    ] {
        assert_eq!(recover(&k, &off), RecoveryDecision::Abandon);
        assert_eq!(recover(&k, &spent), RecoveryDecision::Abandon);
    }
}

#[test]
fn failure_categories_order_by_priority() {
    use FailureCategory::*;
    let mut v = vec![
        Other,
        InteractionFailure,
        ObjectNotFound,
        SubgoalPrediction,
        GroundingFailure,
        PlanNotFound,
    ];
    v.sort();
    assert_eq!(
        v,
        vec![
            SubgoalPrediction,
            PlanNotFound,
            ObjectNotFound,
            GroundingFailure,
            InteractionFailure,
            Other
        ]
    );
    assert_eq!(ExceptionKind::NoPlanFound.category(), PlanNotFound);
    assert_eq!(
        ExceptionKind::ObjectNotFoundAfterSearch.category(),
        ObjectNotFound
    );
    assert_eq!(ExceptionKind::TargetNotVisible.category(), GroundingFailure);
    assert_eq!(ExceptionKind::ReceptacleFull.category(), InteractionFailure);
}

#[test]
fn solved_episode_has_consistent_trace() {
    let planner = Planner::household();
    let ep = generate_scene(TaskTemplate::Coffee, 0, Difficulty::default()).unwrap();
    let subgoals = ep.task.subgoals().unwrap();
    let cfg = ExecConfig::default();
    let run = run_episode(
        &ep.scene,
        &ep.task,
        &subgoals,
        &planner,
        &cfg,
        ep.reference_length,
    )
    .unwrap();
    assert!(run.summary.report.success);
    assert_eq!(run.summary.failure, None);
    let last = run.trace.last().unwrap();
    assert_eq!(last.metrics.as_ref(), Some(&run.summary));
    assert!(run.trace[..run.trace.len() - 1]
        .iter()
        .all(|r| r.metrics.is_none()));
    assert!(run.trace.windows(2).all(|w| w[0].step <= w[1].step));
    assert_eq!(run.summary.steps, run.summary.report.trajectory_length);
    let again = run_episode(
        &ep.scene,
        &ep.task,
        &subgoals,
        &planner,
        &cfg,
        ep.reference_length,
    )
    .unwrap();
    assert_eq!(again.trace, run.trace);
}

#[test]
fn tiny_budget_ends_with_one_failure_category() {
    let planner = Planner::household();
    let ep = generate_scene(TaskTemplate::Sandwich, 0, Difficulty::default()).unwrap();
    let subgoals = ep.task.subgoals().unwrap();
    let cfg = ExecConfig {
        budget: Budget {
            max_steps: 15,
            ..Budget::default()
        },
        ..ExecConfig::default()
    };
    let run = run_episode(
        &ep.scene,
        &ep.task,
        &subgoals,
        &planner,
        &cfg,
        ep.reference_length,
    )
    .unwrap();
    assert!(!run.summary.report.success);
    assert!(run.summary.failure.is_some());
    assert!(run.summary.steps <= 15);
}
