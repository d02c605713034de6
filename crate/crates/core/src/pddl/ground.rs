use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use super::eval::{resolve, Binding};
use super::model::{CategoryHierarchy, DomainModel, Formula, GroundAtom, ProblemModel, SymState};
use super::PddlError;

pub type AtomId = u32;

pub const DEFAULT_GROUNDING_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundOptions {
    /// Maximum number of grounded actions before giving up.
    pub cap: usize,
    /// Evaluate atoms over static predicates (never touched by an effect)
    /// against the initial state while grounding.
    pub static_filter: bool,
    /// Drop actions whose positive preconditions are not relaxed-reachable.
    pub prune_unreachable: bool,
}

impl Default for GroundOptions {
    fn default() -> Self {
        GroundOptions {
            cap: DEFAULT_GROUNDING_CAP,
            static_filter: false,
            prune_unreachable: false,
        }
    }
}

/// Fixed-width bitset over interned atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomSet {
    words: Vec<u64>,
}

impl AtomSet {
    pub fn with_capacity(n: usize) -> Self {
        AtomSet {
            words: vec![0; n.div_ceil(64)],
        }
    }

    #[inline]
    pub fn contains(&self, id: AtomId) -> bool {
        let i = id as usize;
        self.words
            .get(i / 64)
            .is_some_and(|w| w & (1u64 << (i % 64)) != 0)
    }

    #[inline]
    pub fn insert(&mut self, id: AtomId) {
        let i = id as usize;
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, id: AtomId) {
        let i = id as usize;
        self.words[i / 64] &= !(1u64 << (i % 64));
    }

    pub fn iter(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter_map(move |b| {
                if w & (1u64 << b) != 0 {
                    Some((wi * 64 + b) as AtomId)
                } else {
                    None
                }
            })
        })
    }

    pub fn all(&self, ids: &[AtomId]) -> bool {
        ids.iter().all(|&a| self.contains(a))
    }

    pub fn none(&self, ids: &[AtomId]) -> bool {
        ids.iter().all(|&a| !self.contains(a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CondEffect {
    pub pos: Vec<AtomId>,
    pub neg: Vec<AtomId>,
    pub add: Vec<AtomId>,
    pub del: Vec<AtomId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedAction {
    /// Index of the originating schema in the domain.
    pub schema: usize,
    pub name: String,
    pub args: Vec<String>,
    pub pre_pos: Vec<AtomId>,
    pub pre_neg: Vec<AtomId>,
    pub add: Vec<AtomId>,
    pub del: Vec<AtomId>,
    pub cond: Vec<CondEffect>,
    pub cost: u32,
}

impl GroundedAction {
    pub fn label(&self) -> String {
        if self.args.is_empty() {
            self.name.clone()
        } else {
            format!("{}({})", self.name, self.args.join(", "))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundedTask {
    pub objects: Vec<(String, String)>,
    pub categories: CategoryHierarchy,
    atoms: Vec<GroundAtom>,
    index: HashMap<GroundAtom, AtomId>,
    pub init: AtomSet,
    pub goal_pos: Vec<AtomId>,
    pub goal_neg: Vec<AtomId>,
    /// Set when the goal contains a statically false equality.
    pub goal_unsatisfiable: bool,
    pub actions: Vec<GroundedAction>,
}

impl GroundedTask {
    pub fn atom(&self, id: AtomId) -> &GroundAtom {
        &self.atoms[id as usize]
    }

    pub fn atom_id(&self, atom: &GroundAtom) -> Option<AtomId> {
        self.index.get(atom).copied()
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn empty_set(&self) -> AtomSet {
        AtomSet::with_capacity(self.atoms.len())
    }

    pub fn to_state(&self, set: &AtomSet) -> SymState {
        SymState::new(set.iter().map(|id| self.atom(id).clone()))
    }

    /// Atoms unknown to the task cannot influence any action or the goal and are dropped.
    pub fn from_state(&self, state: &SymState) -> AtomSet {
        let mut set = self.empty_set();
        for a in &state.atoms {
            if let Some(id) = self.atom_id(a) {
                set.insert(id);
            }
        }
        set
    }

    pub fn init_state(&self) -> SymState {
        self.to_state(&self.init)
    }

    pub fn is_goal(&self, set: &AtomSet) -> bool {
        !self.goal_unsatisfiable && set.all(&self.goal_pos) && set.none(&self.goal_neg)
    }

    pub fn applicable(&self, action: &GroundedAction, set: &AtomSet) -> bool {
        set.all(&action.pre_pos) && set.none(&action.pre_neg)
    }

    /// Successor without a precondition check. Conditions read the pre-state;
    /// every delete lands before any add.
    pub fn successor(&self, action: &GroundedAction, set: &AtomSet) -> AtomSet {
        let fired: Vec<&CondEffect> = action
            .cond
            .iter()
            .filter(|c| set.all(&c.pos) && set.none(&c.neg))
            .collect();
        let mut next = set.clone();
        for &d in action
            .del
            .iter()
            .chain(fired.iter().flat_map(|c| c.del.iter()))
        {
            next.remove(d);
        }
        for &a in action
            .add
            .iter()
            .chain(fired.iter().flat_map(|c| c.add.iter()))
        {
            next.insert(a);
        }
        next
    }

    /// Preconditions that fail in `set`, rendered as literals.
    pub fn failed_preconditions(&self, action: &GroundedAction, set: &AtomSet) -> Vec<String> {
        let mut out: Vec<String> = action
            .pre_pos
            .iter()
            .filter(|&&a| !set.contains(a))
            .map(|&a| self.atom(a).to_string())
            .collect();
        out.extend(
            action
                .pre_neg
                .iter()
                .filter(|&&a| set.contains(a))
                .map(|&a| format!("(not {})", self.atom(a))),
        );
        out
    }

    fn intern(&mut self, atom: GroundAtom) -> AtomId {
        if let Some(&id) = self.index.get(&atom) {
            return id;
        }
        let id = self.atoms.len() as AtomId;
        self.atoms.push(atom.clone());
        self.index.insert(atom, id);
        id
    }
}

pub fn ground(domain: &DomainModel, problem: &ProblemModel) -> Result<GroundedTask, PddlError> {
    ground_with(domain, problem, GroundOptions::default())
}

/// Literal lists before interning.
#[derive(Default)]
struct Lits {
    pos: Vec<GroundAtom>,
    neg: Vec<GroundAtom>,
    /// a statically false literal was found
    impossible: bool,
}

#[derive(Default)]
struct Effects {
    add: Vec<GroundAtom>,
    del: Vec<GroundAtom>,
    cond: Vec<(Lits, Vec<GroundAtom>, Vec<GroundAtom>)>,
}

struct Grounder<'a> {
    domain: &'a DomainModel,
    problem: &'a ProblemModel,
    by_category: BTreeMap<String, Rc<Vec<String>>>,
    statics: BTreeSet<String>,
    options: GroundOptions,
}

impl<'a> Grounder<'a> {
    fn objects_of(&mut self, category: &str) -> Rc<Vec<String>> {
        if let Some(v) = self.by_category.get(category) {
            return Rc::clone(v);
        }
        let v: Vec<String> = self
            .problem
            .objects
            .iter()
            .filter(|(_, c)| self.domain.categories.is_subtype(c, category))
            .map(|(o, _)| o.clone())
            .collect();
        let v = Rc::new(v);
        self.by_category.insert(category.to_string(), Rc::clone(&v));
        v
    }

    fn is_static(&self, pred: &str) -> bool {
        self.options.static_filter && self.statics.contains(pred)
    }

    fn literals(&mut self, f: &Formula, b: &mut Binding, out: &mut Lits) -> Result<(), PddlError> {
        match f {
            Formula::Atom { pred, terms } => {
                let atom = GroundAtom {
                    pred: pred.clone(),
                    args: terms
                        .iter()
                        .map(|t| resolve(t, b))
                        .collect::<Result<_, _>>()?,
                };
                if self.is_static(pred) {
                    if !self.problem.init.contains(&atom) {
                        out.impossible = true;
                    }
                } else {
                    out.pos.push(atom);
                }
            }
            Formula::Equal(x, y) => {
                if resolve(x, b)? != resolve(y, b)? {
                    out.impossible = true;
                }
            }
            Formula::Not(inner) => match inner.as_ref() {
                Formula::Atom { pred, terms } => {
                    let atom = GroundAtom {
                        pred: pred.clone(),
                        args: terms
                            .iter()
                            .map(|t| resolve(t, b))
                            .collect::<Result<_, _>>()?,
                    };
                    if self.is_static(pred) {
                        if self.problem.init.contains(&atom) {
                            out.impossible = true;
                        }
                    } else {
                        out.neg.push(atom);
                    }
                }
                Formula::Equal(x, y) => {
                    if resolve(x, b)? == resolve(y, b)? {
                        out.impossible = true;
                    }
                }
                _ => unreachable!("parser only admits negated atoms and equalities"),
            },
            Formula::And(parts) => {
                for p in parts {
                    self.literals(p, b, out)?;
                    if out.impossible {
                        break;
                    }
                }
            }
            Formula::Forall {
                var,
                category,
                body,
            } => {
                for o in self.objects_of(category).iter().cloned() {
                    let prev = b.insert(var.clone(), o);
                    let r = self.literals(body, b, out);
                    restore(b, var, prev);
                    r?;
                    if out.impossible {
                        break;
                    }
                }
            }
            Formula::When { .. } => unreachable!("parser rejects `when` outside effects"),
        }
        Ok(())
    }

    fn effects(
        &mut self,
        f: &Formula,
        b: &mut Binding,
        out: &mut Effects,
    ) -> Result<(), PddlError> {
        match f {
            Formula::Atom { pred, terms } => out.add.push(GroundAtom {
                pred: pred.clone(),
                args: terms
                    .iter()
                    .map(|t| resolve(t, b))
                    .collect::<Result<_, _>>()?,
            }),
            Formula::Not(inner) => match inner.as_ref() {
                Formula::Atom { pred, terms } => out.del.push(GroundAtom {
                    pred: pred.clone(),
                    args: terms
                        .iter()
                        .map(|t| resolve(t, b))
                        .collect::<Result<_, _>>()?,
                }),
                _ => unreachable!("parser only admits negated atoms in effects"),
            },
            Formula::And(parts) => {
                for p in parts {
                    self.effects(p, b, out)?;
                }
            }
            Formula::Forall {
                var,
                category,
                body,
            } => {
                for o in self.objects_of(category).iter().cloned() {
                    let prev = b.insert(var.clone(), o);
                    let r = self.effects(body, b, out);
                    restore(b, var, prev);
                    r?;
                }
            }
            Formula::When { cond, effect } => {
                let mut lits = Lits::default();
                self.literals(cond, b, &mut lits)?;
                if lits.impossible {
                    return Ok(());
                }
                let mut inner = Effects::default();
                self.effects(effect, b, &mut inner)?;
                if lits.pos.is_empty() && lits.neg.is_empty() {
                    out.add.extend(inner.add);
                    out.del.extend(inner.del);
                } else {
                    out.cond.push((lits, inner.add, inner.del));
                }
            }
            Formula::Equal(..) => {
                return Err(PddlError::Syntax {
                    line: 0,
                    column: 0,
                    expected: "equality only in conditions".into(),
                })
            }
        }
        Ok(())
    }
}

fn restore(b: &mut Binding, var: &str, prev: Option<String>) {
    match prev {
        Some(p) => {
            b.insert(var.to_string(), p);
        }
        None => {
            b.remove(var);
        }
    }
}

fn effect_predicates(f: &Formula, out: &mut BTreeSet<String>) {
    match f {
        Formula::Atom { pred, .. } => {
            out.insert(pred.clone());
        }
        Formula::Not(b) | Formula::Forall { body: b, .. } => effect_predicates(b, out),
        Formula::And(p) => p.iter().for_each(|x| effect_predicates(x, out)),
        Formula::When { effect, .. } => effect_predicates(effect, out),
        Formula::Equal(..) => {}
    }
}

/// Deduplicates and resolves add/delete overlap in favour of the add.
fn settle(add: &mut Vec<AtomId>, del: &mut Vec<AtomId>) {
    add.sort_unstable();
    add.dedup();
    del.sort_unstable();
    del.dedup();
    del.retain(|d| add.binary_search(d).is_err());
}

pub fn ground_with(
    domain: &DomainModel,
    problem: &ProblemModel,
    options: GroundOptions,
) -> Result<GroundedTask, PddlError> {
    let mut dynamic = BTreeSet::new();
    for a in &domain.actions {
        effect_predicates(&a.effect, &mut dynamic);
    }
    let statics: BTreeSet<String> = domain
        .predicates
        .iter()
        .map(|p| p.name.clone())
        .filter(|p| !dynamic.contains(p))
        .collect();
    let mut g = Grounder {
        domain,
        problem,
        by_category: BTreeMap::new(),
        statics,
        options,
    };
    let mut task = GroundedTask {
        objects: problem.objects.clone(),
        categories: domain.categories.clone(),
        atoms: Vec::new(),
        index: HashMap::new(),
        init: AtomSet::with_capacity(0),
        goal_pos: Vec::new(),
        goal_neg: Vec::new(),
        goal_unsatisfiable: false,
        actions: Vec::new(),
    };
    for atom in &problem.init {
        task.intern(atom.clone());
    }
    // goal first so its atoms exist even when no action touches them
    let mut goal = Lits::default();
    {
        let saved = g.options.static_filter;
        g.options.static_filter = false;
        g.literals(&problem.goal, &mut Binding::new(), &mut goal)?;
        g.options.static_filter = saved;
    }
    task.goal_unsatisfiable = goal.impossible;
    task.goal_pos = goal.pos.into_iter().map(|a| task.intern(a)).collect();
    task.goal_neg = goal.neg.into_iter().map(|a| task.intern(a)).collect();
    task.goal_pos.sort_unstable();
    task.goal_pos.dedup();
    task.goal_neg.sort_unstable();
    task.goal_neg.dedup();

    for (si, schema) in domain.actions.iter().enumerate() {
        let domains: Vec<Rc<Vec<String>>> =
            schema.params.iter().map(|(_, c)| g.objects_of(c)).collect();
        if domains.iter().any(|d| d.is_empty()) {
            continue;
        }
        if !options.static_filter {
            let total = task.actions.len();
            let product = domains
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(d.len()))
                .unwrap_or(usize::MAX);
            if total.saturating_add(product) > options.cap {
                return Err(PddlError::GroundingExplosion { cap: options.cap });
            }
        }
        let mut idx = vec![0usize; domains.len()];
        loop {
            let mut b = Binding::new();
            for (k, (var, _)) in schema.params.iter().enumerate() {
                b.insert(var.clone(), domains[k][idx[k]].clone());
            }
            let mut pre = Lits::default();
            g.literals(&schema.precondition, &mut b, &mut pre)?;
            if !pre.impossible {
                let mut eff = Effects::default();
                g.effects(&schema.effect, &mut b, &mut eff)?;
                let mut action = GroundedAction {
                    schema: si,
                    name: schema.name.clone(),
                    args: schema.params.iter().map(|(v, _)| b[v].clone()).collect(),
                    pre_pos: pre.pos.into_iter().map(|a| task.intern(a)).collect(),
                    pre_neg: pre.neg.into_iter().map(|a| task.intern(a)).collect(),
                    add: eff.add.into_iter().map(|a| task.intern(a)).collect(),
                    del: eff.del.into_iter().map(|a| task.intern(a)).collect(),
                    cond: Vec::new(),
                    cost: schema.cost,
                };
                settle(&mut action.add, &mut action.del);
                action.pre_pos.sort_unstable();
                action.pre_pos.dedup();
                action.pre_neg.sort_unstable();
                action.pre_neg.dedup();
                for (lits, add, del) in eff.cond {
                    let mut c = CondEffect {
                        pos: lits.pos.into_iter().map(|a| task.intern(a)).collect(),
                        neg: lits.neg.into_iter().map(|a| task.intern(a)).collect(),
                        add: add.into_iter().map(|a| task.intern(a)).collect(),
                        del: del.into_iter().map(|a| task.intern(a)).collect(),
                    };
                    settle(&mut c.add, &mut c.del);
                    action.cond.push(c);
                }
                task.actions.push(action);
                if task.actions.len() > options.cap {
                    return Err(PddlError::GroundingExplosion { cap: options.cap });
                }
            }
            // odometer over parameter domains, last parameter fastest
            let mut done = true;
            let mut k = domains.len();
            while k > 0 {
                k -= 1;
                idx[k] += 1;
                if idx[k] < domains[k].len() {
                    done = false;
                    break;
                }
                idx[k] = 0;
            }
            if done {
                break;
            }
        }
    }

    let mut init = AtomSet::with_capacity(task.atoms.len());
    for atom in &problem.init {
        init.insert(task.index[atom]);
    }
    task.init = init;
    if options.prune_unreachable {
        prune_unreachable(&mut task);
    }
    Ok(task)
}

fn prune_unreachable(task: &mut GroundedTask) {
    let mut reached = task.init.clone();
    let mut live = vec![false; task.actions.len()];
    loop {
        let mut changed = false;
        for (i, a) in task.actions.iter().enumerate() {
            if !reached.all(&a.pre_pos) {
                continue;
            }
            if !live[i] {
                live[i] = true;
                changed = true;
            }
            let adds: Vec<AtomId> = a
                .add
                .iter()
                .chain(
                    a.cond
                        .iter()
                        .filter(|c| reached.all(&c.pos))
                        .flat_map(|c| c.add.iter()),
                )
                .copied()
                .collect();
            for x in adds {
                if !reached.contains(x) {
                    reached.insert(x);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut i = 0;
    task.actions.retain(|_| {
        let keep = live[i];
        i += 1;
        keep
    });
}
