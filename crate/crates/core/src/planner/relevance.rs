use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::monitor::SubgoalPredicate;
use crate::pddl::DomainModel;

use super::PlannerError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceEntry {
    /// Categories kept by pruning for this predicate.
    pub relevant: Vec<String>,
    /// Any-of groups; when no instance of a group is known, a dummy of the
    /// group's first category is injected.
    #[serde(default)]
    pub required: Vec<Vec<String>>,
}

/// Predicate to relevant categories, used by scene pruning and dummy injection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceTable {
    pub entries: BTreeMap<SubgoalPredicate, RelevanceEntry>,
    /// Categories that carry liquid to non-pickupable targets.
    #[serde(default)]
    pub carriers: Vec<String>,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for RelevanceTable {
    fn default() -> Self {
        use SubgoalPredicate::*;
        let e = |rel: &[&str], req: &[&[&str]]| RelevanceEntry {
            relevant: strings(rel),
            required: req.iter().map(|g| strings(g)).collect(),
        };
        let mut entries = BTreeMap::new();
        entries.insert(
            IsCooked,
            e(
                &["Microwave", "StoveBurner", "Toaster", "Pan", "Pot"],
                &[&["Toaster", "Microwave", "StoveBurner"]],
            ),
        );
        entries.insert(IsClean, e(&["Sink", "Faucet"], &[&["Sink"], &["Faucet"]]));
        entries.insert(IsPickedUp, e(&[], &[]));
        entries.insert(
            IsFilledWithLiquid,
            e(
                &["Sink", "Faucet", "CoffeeMachine"],
                &[&["Sink"], &["Faucet"]],
            ),
        );
        entries.insert(IsEmptied, e(&["CounterTop"], &[]));
        entries.insert(IsSliced, e(&["Knife"], &[&["Knife"]]));
        entries.insert(
            SimbotIsFilledWithCoffee,
            e(&["CoffeeMachine"], &[&["CoffeeMachine"]]),
        );
        entries.insert(IsPlacedTo, e(&[], &[]));
        entries.insert(IsToggled, e(&[], &[]));
        RelevanceTable {
            entries,
            carriers: strings(&["Cup", "Mug", "Bowl"]),
        }
    }
}

impl RelevanceTable {
    pub fn from_json(text: &str) -> Result<Self, PlannerError> {
        serde_json::from_str(text).map_err(|e| PlannerError::Config(e.to_string()))
    }

    pub fn entry(&self, p: SubgoalPredicate) -> Result<&RelevanceEntry, PlannerError> {
        self.entries
            .get(&p)
            .ok_or_else(|| PlannerError::UnknownPredicate(p.symbol().to_string()))
    }

    /// Checks coverage of every subgoal predicate and that categories exist.
    pub fn validate(&self, domain: &DomainModel) -> Result<(), PlannerError> {
        for p in SubgoalPredicate::ALL {
            let e = self.entry(p)?;
            let cats = e
                .relevant
                .iter()
                .chain(e.required.iter().flatten())
                .chain(self.carriers.iter());
            for c in cats {
                if !domain.categories.contains(c) {
                    return Err(PlannerError::UnknownCategory(c.clone()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::parse_domain;
    use crate::planner::HOUSEHOLD_DOMAIN;

    #[test]
    fn defaults_cover_domain() {
        let d = parse_domain(HOUSEHOLD_DOMAIN).unwrap();
        RelevanceTable::default().validate(&d).unwrap();
    }

    #[test]
    fn json_round_trip_and_missing_entry() {
        let t = RelevanceTable::default();
        let j = serde_json::to_string(&t).unwrap();
        assert_eq!(RelevanceTable::from_json(&j).unwrap(), t);
        let mut t2 = t.clone();
        t2.entries.remove(&SubgoalPredicate::IsClean);
        let d = parse_domain(HOUSEHOLD_DOMAIN).unwrap();
        assert!(matches!(
            t2.validate(&d),
            Err(PlannerError::UnknownPredicate(_))
        ));
    }
}
