use std::collections::{BTreeMap, BTreeSet};

use crate::affordance::AffordanceTable;
use crate::monitor::{instance_satisfies, Subgoal, SubgoalPredicate};
use crate::pddl::{Formula, GroundAtom, ProblemModel, Term};

use super::belief::{dummy_id, ordinal, Belief, BeliefInstance};
use super::relevance::RelevanceTable;
use super::PlannerError;

/// Horizontal reach within which an instance counts as near.
pub const INTERACT_DIST: f64 = 1.0;

/// Dynamic physical states copied from belief into `:init` when known true.
pub const DYNAMIC_STATES: [&str; 7] = [
    "isOpen",
    "isToggled",
    "isCooked",
    "isClean",
    "isFilledWithLiquid",
    "simbotIsFilledWithCoffee",
    "isSliced",
];

/// Concrete instances chosen for a category-level subgoal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalBinding {
    pub patient: String,
    pub destination: Option<String>,
}

fn needs_carrier(subgoal: &Subgoal, aff: &AffordanceTable) -> bool {
    subgoal.predicate() == SubgoalPredicate::IsFilledWithLiquid
        && !aff.get(subgoal.patient()).pickupable
}

/// Instances relevant to the subgoal: matching categories, their containment
/// parents and children (children of large surfaces excluded), the held
/// object, and a put-down surface when the hand is occupied.
pub fn prune_scene(
    belief: &Belief,
    subgoal: &Subgoal,
    relevance: &RelevanceTable,
    aff: &AffordanceTable,
) -> Result<BTreeSet<String>, PlannerError> {
    let entry = relevance.entry(subgoal.predicate())?;
    let mut cats: BTreeSet<&str> = entry.relevant.iter().map(String::as_str).collect();
    cats.insert(subgoal.patient());
    if let Some(d) = subgoal.destination() {
        cats.insert(d);
    }
    if needs_carrier(subgoal, aff) {
        cats.extend(relevance.carriers.iter().map(String::as_str));
    }

    let mut kept = BTreeSet::new();
    let mut work: Vec<&BeliefInstance> = belief
        .instances
        .iter()
        .filter(|i| cats.contains(i.category.as_str()) || i.held)
        .collect();
    if belief.held().is_some() {
        if let Some(s) = put_down_surface(belief, aff) {
            work.push(s);
        }
    }
    while let Some(inst) = work.pop() {
        if !kept.insert(inst.id.clone()) {
            continue;
        }
        if let Some(p) = inst.parent.as_deref().and_then(|p| belief.get(p)) {
            work.push(p);
        }
        if !aff.get(&inst.category).surface {
            work.extend(belief.children(&inst.id));
        }
    }
    Ok(kept)
}

fn put_down_surface<'a>(belief: &'a Belief, aff: &AffordanceTable) -> Option<&'a BeliefInstance> {
    let rank = |i: &BeliefInstance| {
        let a = aff.get(&i.category);
        if i.category == "CounterTop" {
            Some(0)
        } else if a.surface {
            Some(1)
        } else {
            None
        }
    };
    belief
        .instances
        .iter()
        .filter_map(|i| rank(i).map(|r| (r, i)))
        .min_by(|(ra, a), (rb, b)| {
            ra.cmp(rb)
                .then(belief.distance(a).total_cmp(&belief.distance(b)))
                .then(ordinal(&a.id).cmp(&ordinal(&b.id)))
        })
        .map(|(_, i)| i)
}

/// Picks the patient (and destination) instance among `kept`. Instances that
/// already satisfy the subgoal are avoided while alternatives exist; then held
/// beats near beats far, ties broken by centroid distance and ordinal.
pub fn bind_goal(
    belief: &Belief,
    kept: &BTreeSet<String>,
    subgoal: &Subgoal,
    aff: &AffordanceTable,
) -> (Option<String>, Option<String>) {
    fn pool<'a>(
        belief: &'a Belief,
        kept: &BTreeSet<String>,
        cat: &'a str,
    ) -> Vec<&'a BeliefInstance> {
        belief
            .of_category(cat)
            .filter(|i| kept.contains(&i.id))
            .collect()
    }
    let patients = pool(belief, kept, subgoal.patient());
    let patient = patients
        .iter()
        .min_by(|a, b| {
            let key = |i: &BeliefInstance| {
                (
                    instance_satisfies(belief, subgoal, i),
                    !i.held,
                    belief.reach(i) > INTERACT_DIST,
                )
            };
            key(a)
                .cmp(&key(b))
                .then(belief.distance(a).total_cmp(&belief.distance(b)))
                .then(ordinal(&a.id).cmp(&ordinal(&b.id)))
        })
        .map(|i| i.id.clone());

    let destination = subgoal.destination().and_then(|d| {
        let anchor = patient
            .as_deref()
            .and_then(|p| belief.get(p))
            .map(|p| p.centroid)
            .unwrap_or(belief.agent);
        let cap =
            |i: &BeliefInstance| i.capacity.or(aff.capacity(&i.category)).unwrap_or(0) as usize;
        pool(belief, kept, d)
            .into_iter()
            .filter(|r| Some(r.id.as_str()) != patient.as_deref())
            .min_by(|a, b| {
                let full = |i: &BeliefInstance| belief.children(&i.id).count() >= cap(i);
                let dist = |i: &BeliefInstance| super::belief::euclid(i.centroid, anchor);
                full(a)
                    .cmp(&full(b))
                    .then(dist(a).total_cmp(&dist(b)))
                    .then(ordinal(&a.id).cmp(&ordinal(&b.id)))
            })
            .map(|i| i.id.clone())
    });
    (patient, destination)
}

fn atom(pred: &str, args: &[&str]) -> GroundAtom {
    GroundAtom::new(pred, args)
}

fn obj(name: &str) -> Term {
    Term::Obj(name.to_string())
}

/// Builds the problem for one subgoal. Missing patient/destination instances
/// are declared as dummies so the problem stays well-formed; without
/// `inject_unobserved` they are unreachable and the search reports NoSolution.
pub fn build_problem(
    belief: &Belief,
    kept: &BTreeSet<String>,
    subgoal: &Subgoal,
    domain_name: &str,
    aff: &AffordanceTable,
) -> (ProblemModel, GoalBinding) {
    let mut objects = Vec::new();
    let mut init = BTreeSet::new();
    let openable = |c: &str| aff.get(c).openable;
    for inst in belief.instances.iter().filter(|i| kept.contains(&i.id)) {
        let id = inst.id.as_str();
        objects.push((inst.id.clone(), inst.category.clone()));
        for p in aff.get(&inst.category).static_predicates() {
            init.insert(atom(p, &[id]));
        }
        if inst.held {
            init.insert(atom("isPickedUp", &[id]));
            init.insert(atom("isVisible", &[id]));
        } else {
            if !belief.enclosed(inst, openable) {
                init.insert(atom("isVisible", &[id]));
            }
            if belief.reach(inst) <= INTERACT_DIST {
                init.insert(atom("isNear", &[id]));
            }
            if let Some(p) = inst.parent.as_deref().filter(|p| kept.contains(*p)) {
                init.insert(atom("parentReceptacles", &[id, p]));
                init.insert(atom("isPlacedTo", &[id, p]));
            }
        }
        for s in DYNAMIC_STATES {
            if inst.is(s) {
                init.insert(atom(s, &[id]));
            }
        }
        if openable(&inst.category) && !inst.is("isOpen") {
            init.insert(atom("isClosed", &[id]));
        }
        if let Some(cap) = inst.capacity.or(aff.capacity(&inst.category)) {
            if belief.children(id).count() >= cap as usize {
                init.insert(atom("isFull", &[id]));
            }
        }
    }

    let (patient, destination) = bind_goal(belief, kept, subgoal, aff);
    let mut declare = |bound: Option<String>, cat: &str| -> String {
        bound.unwrap_or_else(|| {
            let d = dummy_id(cat);
            if !objects.iter().any(|(o, _)| *o == d) {
                objects.push((d.clone(), cat.to_string()));
                for p in aff.get(cat).static_predicates() {
                    init.insert(atom(p, &[&d]));
                }
            }
            d
        })
    };
    let patient = declare(patient, subgoal.patient());
    let destination = subgoal
        .destination()
        .map(|d| declare(destination.clone(), d));

    let goal = match subgoal.predicate() {
        SubgoalPredicate::IsPlacedTo => Formula::atom(
            "isPlacedTo",
            vec![
                obj(&patient),
                obj(destination.as_deref().unwrap_or_default()),
            ],
        ),
        SubgoalPredicate::IsEmptied => Formula::And(
            objects
                .iter()
                .filter(|(o, _)| *o != patient)
                .map(|(o, _)| {
                    Formula::not(Formula::atom(
                        "parentReceptacles",
                        vec![obj(o), obj(&patient)],
                    ))
                })
                .collect(),
        ),
        p => Formula::atom(p.symbol(), vec![obj(&patient)]),
    };
    let problem = ProblemModel {
        name: "subgoal".to_string(),
        domain: domain_name.to_string(),
        objects,
        init,
        goal,
    };
    (
        problem,
        GoalBinding {
            patient,
            destination,
        },
    )
}

/// Marks declared-but-unseen dummies `unobserved` and adds one dummy per
/// required category group with no instance in the problem.
pub fn inject_unobserved(
    mut problem: ProblemModel,
    subgoal: &Subgoal,
    relevance: &RelevanceTable,
    aff: &AffordanceTable,
    belief: &Belief,
) -> Result<ProblemModel, PlannerError> {
    let entry = relevance.entry(subgoal.predicate())?;
    let mut groups: Vec<Vec<String>> = entry.required.clone();
    if needs_carrier(subgoal, aff) {
        groups.push(relevance.carriers.clone());
    }
    let present: BTreeMap<&str, usize> =
        problem
            .objects
            .iter()
            .fold(BTreeMap::new(), |mut m, (_, c)| {
                *m.entry(c.as_str()).or_default() += 1;
                m
            });
    let mut add = Vec::new();
    for g in &groups {
        if g.iter().all(|c| !present.contains_key(c.as_str())) {
            if let Some(first) = g.first() {
                add.push(first.clone());
            }
        }
    }
    for cat in add {
        let d = dummy_id(&cat);
        if problem.objects.iter().all(|(o, _)| *o != d) {
            problem.objects.push((d.clone(), cat.clone()));
            for p in aff.get(&cat).static_predicates() {
                problem.init.insert(atom(p, &[&d]));
            }
        }
    }
    let dummies: Vec<String> = problem
        .objects
        .iter()
        .filter(|(o, _)| belief.get(o).is_none())
        .map(|(o, _)| o.clone())
        .collect();
    for d in dummies {
        problem.init.insert(atom("unobserved", &[&d]));
        if aff.get(super::belief::split_id(&d).0).openable {
            problem.init.insert(atom("isClosed", &[&d]));
        }
    }
    Ok(problem)
}
