use std::time::Duration;

use super::*;
use crate::monitor::{Subgoal, SubgoalPredicate as P};
use crate::pddl::{ground, parse_problem, GroundAtom};

const KNIFE_DOMAIN: &str = include_str!("../../tests/data/knife_domain.pddl");
const KNIFE_PROBLEM: &str = include_str!("../../tests/data/knife_problem.pddl");

fn names(plan: &MidLevelPlan) -> Vec<String> {
    plan.actions.iter().map(|a| a.to_string()).collect()
}

fn solve(belief: &Belief, sg: &Subgoal) -> PlanResult {
    Planner::household()
        .plan(
            PlanRequest {
                subgoal: sg,
                belief,
            },
            &PlanOptions::default(),
        )
        .unwrap()
}

fn solved(r: &PlanResult) -> Vec<String> {
    match &r.outcome {
        PlanOutcome::Solved(p) => names(p),
        o => panic!("expected a plan, got {o:?}"),
    }
}

fn inst(id: &str, x: f64, y: f64, z: f64) -> BeliefInstance {
    let cat = split_id(id).0;
    BeliefInstance::new(id, cat, [x, y, z])
}

fn belief(instances: Vec<BeliefInstance>) -> Belief {
    Belief {
        agent: [0.125, 0.125, 1.5],
        instances,
    }
}

#[test]
fn appendix_knife_plan() {
    let d = parse_domain(KNIFE_DOMAIN).unwrap();
    let p = parse_problem(KNIFE_PROBLEM, &d).unwrap();
    let t = ground(&d, &p).unwrap();
    match search_plan(&t, Duration::from_secs(1)) {
        PlanOutcome::Solved(plan) => {
            assert_eq!(names(&plan), ["PickUp(Knife_0)"]);
            assert!(validate_plan(&plan.indices, &t).valid);
        }
        o => panic!("{o:?}"),
    }
}

#[test]
fn unobserved_mug_is_searched() {
    let r = solve(&belief(vec![]), &Subgoal::unary("Mug", P::IsPickedUp));
    assert_eq!(
        solved(&r),
        ["Search(Mug_u0)", "GoTo(Mug_u0)", "PickUp(Mug_u0)"]
    );
}

#[test]
fn observed_mug_is_not_searched() {
    let b = belief(vec![inst("Mug_0", 3.0, 3.0, 1.1)]);
    let r = solve(&b, &Subgoal::unary("Mug", P::IsPickedUp));
    assert_eq!(solved(&r), ["GoTo(Mug_0)", "PickUp(Mug_0)"]);
    assert!(!r.problem.objects.iter().any(|(o, _)| is_dummy(o)));
}

#[test]
fn dummy_only_for_missing_required_category() {
    let planner = Planner::household();
    let b = belief(vec![inst("Mug_0", 4.0, 4.0, 1.1)]);
    let sg = Subgoal::unary("Mug", P::SimbotIsFilledWithCoffee);
    let (problem, binding) = planner
        .problem(
            PlanRequest {
                subgoal: &sg,
                belief: &b,
            },
            &PlanOptions::default(),
        )
        .unwrap();
    assert_eq!(binding.patient, "Mug_0");
    let dummies: Vec<_> = problem
        .objects
        .iter()
        .filter(|(o, _)| is_dummy(o))
        .collect();
    assert_eq!(
        dummies,
        [&("CoffeeMachine_u0".to_string(), "CoffeeMachine".to_string())]
    );
    assert!(problem
        .init
        .contains(&GroundAtom::new("unobserved", &["CoffeeMachine_u0"])));
}

#[test]
fn prune_cooking_scene() {
    let b = belief(vec![
        inst("Potato_0", 1.0, 1.0, 1.0),
        inst("Microwave_0", 2.0, 1.0, 1.0),
        inst("Toaster_0", 2.0, 2.0, 1.0),
        inst("Bed_0", 4.0, 4.0, 0.3),
    ]);
    let kept = prune_scene(
        &b,
        &Subgoal::unary("Potato", P::IsCooked),
        &RelevanceTable::default(),
        &AffordanceTable::household(),
    )
    .unwrap();
    let want: BTreeSet<String> = ["Potato_0", "Microwave_0", "Toaster_0"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(kept, want);
}

#[test]
fn prune_keeps_container_and_nothing_for_empty_belief() {
    let b = belief(vec![
        inst("Potato_0", 1.0, 1.0, 1.0).in_parent("Fridge_0"),
        inst("Fridge_0", 1.0, 1.0, 0.8),
        inst("Bed_0", 4.0, 4.0, 0.3),
    ]);
    let (rel, aff) = (RelevanceTable::default(), AffordanceTable::household());
    let sg = Subgoal::unary("Potato", P::IsCooked);
    let kept = prune_scene(&b, &sg, &rel, &aff).unwrap();
    assert!(kept.contains("Fridge_0"));
    assert!(!kept.contains("Bed_0"));
    assert!(prune_scene(&belief(vec![]), &sg, &rel, &aff)
        .unwrap()
        .is_empty());
}

#[test]
fn knife_problem_shape() {
    let b = belief(vec![
        inst("Knife_0", 0.5, 0.5, 0.8).in_parent("DiningTable_0"),
        inst("DiningTable_0", 0.6, 0.6, 0.4),
    ]);
    let r = solve(&b, &Subgoal::unary("Knife", P::IsPickedUp));
    let mut objs = r.problem.objects.clone();
    objs.sort();
    assert_eq!(
        objs,
        [
            ("DiningTable_0".to_string(), "DiningTable".to_string()),
            ("Knife_0".to_string(), "Knife".to_string())
        ]
    );
    for a in [
        "isVisible Knife_0",
        "isNear Knife_0",
        "isVisible DiningTable_0",
        "isNear DiningTable_0",
    ] {
        let (p, x) = a.split_once(' ').unwrap();
        assert!(r.problem.init.contains(&GroundAtom::new(p, &[x])), "{a}");
    }
    assert_eq!(solved(&r), ["PickUp(Knife_0)"]);
}

#[test]
fn placed_goal_binds_a_pair() {
    let b = belief(vec![
        inst("BreadSlice_0", 1.0, 1.0, 1.1),
        inst("BreadSlice_1", 3.0, 3.0, 1.1),
        inst("Plate_0", 3.0, 1.0, 1.0),
        inst("Plate_1", 1.25, 1.0, 1.0),
    ]);
    let r = solve(&b, &Subgoal::placed("BreadSlice", "Plate"));
    assert_eq!(r.binding.patient, "BreadSlice_0");
    assert_eq!(r.binding.destination.as_deref(), Some("Plate_1"));
    assert_eq!(
        solved(&r),
        [
            "GoTo(BreadSlice_0)",
            "PickUp(BreadSlice_0)",
            "GoTo(Plate_1)",
            "Place(BreadSlice_0, Plate_1)"
        ]
    );
}

#[test]
fn satisfied_subgoal() {
    let b = belief(vec![
        inst("Mug_0", 1.0, 1.0, 1.0).with_state("isClean", true)
    ]);
    let r = solve(&b, &Subgoal::unary("Mug", P::IsClean));
    assert_eq!(r.outcome, PlanOutcome::GoalAlreadySatisfied);
}

#[test]
fn unreachable_goal_has_no_solution() {
    let d = parse_domain(
        "(define (domain two) (:requirements :strips)
           (:predicates (p) (q) (r))
           (:action a :parameters () :precondition (p) :effect (q))
           (:action b :parameters () :precondition (q) :effect (not (p))))",
    )
    .unwrap();
    let p = parse_problem(
        "(define (problem x) (:domain two) (:init (p)) (:goal (r)))",
        &d,
    )
    .unwrap();
    let t = ground(&d, &p).unwrap();
    assert_eq!(
        search_plan(&t, Duration::from_secs(1)),
        PlanOutcome::NoSolution
    );
}

#[test]
fn reordered_plan_fails_validation() {
    let b = belief(vec![inst("Mug_0", 3.0, 3.0, 1.1)]);
    let planner = Planner::household();
    let sg = Subgoal::unary("Mug", P::IsPickedUp);
    let (problem, _) = planner
        .problem(
            PlanRequest {
                subgoal: &sg,
                belief: &b,
            },
            &PlanOptions::default(),
        )
        .unwrap();
    let t = crate::pddl::ground_with(
        &planner.domain,
        &problem,
        crate::pddl::GroundOptions {
            static_filter: true,
            ..Default::default()
        },
    )
    .unwrap();
    let PlanOutcome::Solved(plan) = search_plan(&t, Duration::from_secs(5)) else {
        panic!()
    };
    assert!(validate_plan(&plan.indices, &t).valid);
    let mut rev = plan.indices.clone();
    rev.reverse();
    let v = validate_plan(&rev, &t);
    assert!(!v.valid);
    assert_eq!(v.failing_step, Some(0));
    assert!(validate_plan(&[], &t).failing_step == Some(0));
}

#[test]
fn empty_plan_valid_when_goal_holds() {
    let d = parse_domain(KNIFE_DOMAIN).unwrap();
    let mut p = parse_problem(KNIFE_PROBLEM, &d).unwrap();
    p.init.insert(GroundAtom::new("isPickedUp", &["Knife_0"]));
    let t = ground(&d, &p).unwrap();
    assert!(validate_plan(&[], &t).valid);
    assert_eq!(
        search_plan(&t, Duration::from_secs(1)),
        PlanOutcome::GoalAlreadySatisfied
    );
}

#[test]
fn household_scenarios_solve() {
    let kitchen = || {
        vec![
            inst("CounterTop_0", 2.0, 3.0, 0.5),
            inst("Sink_0", 3.0, 3.0, 0.5),
            inst("Faucet_0", 3.25, 3.25, 1.1),
            inst("CoffeeMachine_0", 2.0, 3.0, 1.1).in_parent("CounterTop_0"),
            inst("Toaster_0", 2.5, 3.0, 1.1).in_parent("CounterTop_0"),
            inst("Mug_0", 1.5, 3.0, 1.1).in_parent("CounterTop_0"),
            inst("Bread_0", 1.75, 3.0, 1.1).in_parent("CounterTop_0"),
            inst("Knife_0", 1.25, 3.0, 1.1).in_parent("CounterTop_0"),
            inst("HousePlant_0", 0.5, 2.0, 0.5),
            inst("Cup_0", 1.0, 3.0, 1.1).in_parent("CounterTop_0"),
            inst("Fridge_0", 0.5, 3.0, 0.8),
            inst("Potato_0", 0.5, 3.0, 0.8).in_parent("Fridge_0"),
            inst("Microwave_0", 2.75, 3.0, 1.1).in_parent("CounterTop_0"),
        ]
    };
    let cases = [
        Subgoal::unary("Mug", P::IsClean),
        Subgoal::unary("Mug", P::SimbotIsFilledWithCoffee),
        Subgoal::unary("Bread", P::IsSliced),
        Subgoal::unary("HousePlant", P::IsFilledWithLiquid),
        Subgoal::unary("Potato", P::IsCooked),
        Subgoal::unary("Faucet", P::IsToggled),
        Subgoal::placed("Mug", "Sink"),
    ];
    for sg in cases {
        let b = belief(kitchen());
        let r = solve(&b, &sg);
        let plan = solved(&r);
        assert!(
            !plan.iter().any(|a| a.starts_with("Search")),
            "{sg}: {plan:?}"
        );
    }
}

#[test]
fn planning_is_deterministic() {
    let b = belief(vec![
        inst("Mug_0", 3.0, 3.0, 1.1),
        inst("Mug_1", 3.0, 3.0, 1.1),
        inst("Sink_0", 1.0, 2.0, 0.5),
    ]);
    let sg = Subgoal::unary("Mug", P::IsClean);
    let a = solved(&solve(&b, &sg));
    for _ in 0..5 {
        assert_eq!(solved(&solve(&b, &sg)), a);
    }
    assert!(a.iter().any(|s| s.starts_with("Search(Faucet_u0)")));
}

#[test]
fn disabling_unobserved_gives_no_solution() {
    let sg = Subgoal::unary("Mug", P::IsPickedUp);
    let r = Planner::household()
        .plan(
            PlanRequest {
                subgoal: &sg,
                belief: &belief(vec![]),
            },
            &PlanOptions {
                allow_unobserved: false,
                ..Default::default()
            },
        )
        .unwrap();
    assert_eq!(r.outcome, PlanOutcome::NoSolution);
}
