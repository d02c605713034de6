use std::collections::BTreeSet;

use crate::affordance::AffordanceTable;
use crate::planner::{Belief, BeliefInstance};

use super::subgoal::{Subgoal, SubgoalPredicate};

/// Whether `inst` (of the patient category) satisfies the subgoal's literal.
pub fn instance_satisfies(belief: &Belief, subgoal: &Subgoal, inst: &BeliefInstance) -> bool {
    match subgoal.predicate() {
        SubgoalPredicate::IsPickedUp => inst.held,
        SubgoalPredicate::IsEmptied => belief.children(&inst.id).next().is_none(),
        SubgoalPredicate::IsPlacedTo => {
            let dest = subgoal.destination().unwrap_or_default();
            !inst.held
                && inst
                    .parent
                    .as_deref()
                    .and_then(|p| belief.get(p))
                    .is_some_and(|p| p.category == dest)
        }
        p => inst.is(p.symbol()),
    }
}

/// Number of distinct patient instances satisfying the subgoal. A sliced
/// parent retired into yield instances counts once per parent.
pub fn satisfied_count(belief: &Belief, subgoal: &Subgoal, aff: &AffordanceTable) -> usize {
    let mut n = belief
        .of_category(subgoal.patient())
        .filter(|i| instance_satisfies(belief, subgoal, i))
        .count();
    if subgoal.predicate() == SubgoalPredicate::IsSliced {
        if let Some((y, _)) = aff.yield_of(subgoal.patient()) {
            let parents: BTreeSet<&str> = belief
                .of_category(y)
                .filter_map(|i| i.sliced_from.as_deref())
                .filter(|p| belief.get(p).is_none())
                .collect();
            n += parents.len();
        }
    }
    n
}

/// True iff some instance binding satisfies the subgoal in the belief.
pub fn check_completed(subgoal: &Subgoal, belief: &Belief, aff: &AffordanceTable) -> bool {
    satisfied_count(belief, subgoal, aff) >= 1
}
