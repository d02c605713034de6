use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Planner-facing projection of one instance of the world model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefInstance {
    pub id: String,
    pub category: String,
    pub centroid: [f64; 3],
    /// Known physical states; unknown predicates are absent.
    #[serde(default)]
    pub states: BTreeMap<String, bool>,
    /// Receptacle this instance is contained in or supported on.
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub held: bool,
    /// Parent instance this one was sliced from.
    #[serde(default)]
    pub sliced_from: Option<String>,
    /// Known receptacle capacity; the affordance default applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
}

impl BeliefInstance {
    pub fn new(id: &str, category: &str, centroid: [f64; 3]) -> Self {
        BeliefInstance {
            id: id.to_string(),
            category: category.to_string(),
            centroid,
            states: BTreeMap::new(),
            parent: None,
            held: false,
            sliced_from: None,
            capacity: None,
        }
    }

    pub fn with_state(mut self, pred: &str, value: bool) -> Self {
        self.states.insert(pred.to_string(), value);
        self
    }

    pub fn in_parent(mut self, parent: &str) -> Self {
        self.parent = Some(parent.to_string());
        self
    }

    pub fn is(&self, pred: &str) -> bool {
        self.states.get(pred).copied().unwrap_or(false)
    }
}

/// Read-only world snapshot handed to the planner and the monitor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    /// Agent eye position in meters.
    pub agent: [f64; 3],
    pub instances: Vec<BeliefInstance>,
}

impl Belief {
    pub fn get(&self, id: &str) -> Option<&BeliefInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn of_category<'a>(
        &'a self,
        category: &'a str,
    ) -> impl Iterator<Item = &'a BeliefInstance> {
        self.instances
            .iter()
            .filter(move |i| i.category == category)
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a BeliefInstance> {
        self.instances
            .iter()
            .filter(move |i| i.parent.as_deref() == Some(id))
    }

    pub fn held(&self) -> Option<&BeliefInstance> {
        self.instances.iter().find(|i| i.held)
    }

    /// Horizontal distance from the agent to an instance centroid.
    pub fn reach(&self, inst: &BeliefInstance) -> f64 {
        let dx = inst.centroid[0] - self.agent[0];
        let dy = inst.centroid[1] - self.agent[1];
        (dx * dx + dy * dy).sqrt()
    }

    pub fn distance(&self, inst: &BeliefInstance) -> f64 {
        euclid(inst.centroid, self.agent)
    }

    /// True when some enclosing container is believed closed.
    pub fn enclosed(&self, inst: &BeliefInstance, openable: impl Fn(&str) -> bool) -> bool {
        let mut cur = inst.parent.as_deref();
        let mut hops = 0;
        while let Some(p) = cur {
            let Some(pi) = self.get(p) else { break };
            if openable(&pi.category) && !pi.is("isOpen") {
                return true;
            }
            cur = pi.parent.as_deref();
            hops += 1;
            if hops > self.instances.len() {
                break;
            }
        }
        false
    }
}

pub fn euclid(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Splits `Mug_12` into (`Mug`, `12`). Dummies (`Mug_u0`) report no ordinal.
pub fn split_id(id: &str) -> (&str, Option<u32>) {
    match id.rsplit_once('_') {
        Some((cat, ord)) => (cat, ord.parse().ok()),
        None => (id, None),
    }
}

pub fn ordinal(id: &str) -> u32 {
    split_id(id).1.unwrap_or(u32::MAX)
}

pub fn dummy_id(category: &str) -> String {
    format!("{category}_u0")
}

pub fn is_dummy(id: &str) -> bool {
    id.ends_with("_u0")
}
