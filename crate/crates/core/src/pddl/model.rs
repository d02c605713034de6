use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::PddlError;

pub const ROOT_CATEGORY: &str = "Object";

/// Single-inheritance category tree rooted at `Object`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategoryHierarchy {
    parents: BTreeMap<String, String>,
}

impl CategoryHierarchy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `name` with `parent`. The parent is implicitly declared under
    /// the root when unknown.
    pub fn declare(&mut self, name: &str, parent: &str) -> Result<(), PddlError> {
        let name = canonical(name);
        let parent = canonical(parent);
        if name == ROOT_CATEGORY {
            if parent == ROOT_CATEGORY {
                return Ok(());
            }
            return Err(PddlError::CyclicCategory(name.to_string()));
        }
        if let Some(existing) = self.parents.get(name) {
            if existing != parent && existing != ROOT_CATEGORY {
                return Err(PddlError::Duplicate(format!("category {name}")));
            }
        }
        let mut cur = parent;
        while cur != ROOT_CATEGORY {
            if cur == name {
                return Err(PddlError::CyclicCategory(name.to_string()));
            }
            cur = self
                .parents
                .get(cur)
                .map(String::as_str)
                .unwrap_or(ROOT_CATEGORY);
        }
        if parent != ROOT_CATEGORY && !self.parents.contains_key(parent) {
            self.parents
                .insert(parent.to_string(), ROOT_CATEGORY.to_string());
        }
        self.parents.insert(name.to_string(), parent.to_string());
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        let name = canonical(name);
        name == ROOT_CATEGORY || self.parents.contains_key(name)
    }

    pub fn parent(&self, name: &str) -> Option<&str> {
        self.parents.get(canonical(name)).map(String::as_str)
    }

    /// Reflexive, transitive subtype test.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        let sup = canonical(sup);
        let mut cur = canonical(sub);
        loop {
            if cur == sup {
                return true;
            }
            if cur == ROOT_CATEGORY {
                return false;
            }
            match self.parents.get(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// Declared (name, parent) pairs in name order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parents.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }
}

/// `object` in any case denotes the root.
pub(crate) fn canonical(name: &str) -> &str {
    if name.eq_ignore_ascii_case(ROOT_CATEGORY) {
        ROOT_CATEGORY
    } else {
        name
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Obj(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Obj(o) => f.write_str(o),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Atom {
        pred: String,
        terms: Vec<Term>,
    },
    Not(Box<Formula>),
    And(Vec<Formula>),
    Forall {
        var: String,
        category: String,
        body: Box<Formula>,
    },
    When {
        cond: Box<Formula>,
        effect: Box<Formula>,
    },
    Equal(Term, Term),
}

impl Formula {
    pub fn atom(pred: &str, terms: Vec<Term>) -> Self {
        Formula::Atom {
            pred: pred.to_string(),
            terms,
        }
    }

    pub fn ground(atom: &GroundAtom) -> Self {
        Formula::atom(
            &atom.pred,
            atom.args.iter().cloned().map(Term::Obj).collect(),
        )
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn truth() -> Self {
        Formula::And(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Requirement {
    Adl,
    Strips,
    Typing,
    ConditionalEffects,
    ActionCosts,
}

impl Requirement {
    pub fn from_keyword(kw: &str) -> Option<Self> {
        let kw = kw.to_ascii_lowercase();
        Some(match kw.as_str() {
            ":adl" => Requirement::Adl,
            ":strips" => Requirement::Strips,
            ":typing" => Requirement::Typing,
            ":conditional-effects" => Requirement::ConditionalEffects,
            ":action-costs" => Requirement::ActionCosts,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Requirement::Adl => ":adl",
            Requirement::Strips => ":strips",
            Requirement::Typing => ":typing",
            Requirement::ConditionalEffects => ":conditional-effects",
            Requirement::ActionCosts => ":action-costs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    /// (variable name without `?`, category)
    pub params: Vec<(String, String)>,
    pub precondition: Formula,
    pub effect: Formula,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainModel {
    pub name: String,
    pub requirements: BTreeSet<Requirement>,
    pub categories: CategoryHierarchy,
    pub predicates: Vec<PredicateDecl>,
    pub actions: Vec<ActionSchema>,
}

impl DomainModel {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions
            .iter()
            .find(|a| a.name.eq_ignore_ascii_case(name))
    }

    /// Overrides per-action costs from a sidecar table (action name → cost).
    pub fn apply_cost_table(&mut self, table: &BTreeMap<String, u32>) -> Result<(), PddlError> {
        for (name, cost) in table {
            let action = self
                .actions
                .iter_mut()
                .find(|a| a.name.eq_ignore_ascii_case(name))
                .ok_or_else(|| PddlError::UnknownAction(name.clone()))?;
            action.cost = *cost;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub pred: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new(pred: &str, args: &[&str]) -> Self {
        GroundAtom {
            pred: pred.to_string(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.pred)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemModel {
    pub name: String,
    pub domain: String,
    /// (object name, category) in declaration order.
    pub objects: Vec<(String, String)>,
    pub init: BTreeSet<GroundAtom>,
    pub goal: Formula,
}

impl ProblemModel {
    pub fn category_of(&self, object: &str) -> Option<&str> {
        self.objects
            .iter()
            .find(|(o, _)| o == object)
            .map(|(_, c)| c.as_str())
    }
}

/// Closed-world symbolic state.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct SymState {
    pub atoms: BTreeSet<GroundAtom>,
}

impl SymState {
    pub fn new(atoms: impl IntoIterator<Item = GroundAtom>) -> Self {
        SymState {
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.atoms.contains(atom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtype_is_reflexive_and_transitive() {
        let mut h = CategoryHierarchy::new();
        h.declare("Pickupable", "Object").unwrap();
        h.declare("Knife", "Pickupable").unwrap();
        assert!(h.is_subtype("Knife", "Knife"));
        assert!(h.is_subtype("Knife", "Pickupable"));
        assert!(h.is_subtype("Knife", "object"));
        assert!(!h.is_subtype("Pickupable", "Knife"));
    }

    #[test]
    fn implicit_parent_and_cycle_detection() {
        let mut h = CategoryHierarchy::new();
        h.declare("Knife", "Pickupable").unwrap();
        assert_eq!(h.parent("Pickupable"), Some("Object"));
        // re-parenting an implicitly declared category is allowed once
        h.declare("Pickupable", "Thing").unwrap();
        assert!(h.is_subtype("Knife", "Thing"));
        assert!(h.declare("Thing", "Knife").is_err());
    }
}
