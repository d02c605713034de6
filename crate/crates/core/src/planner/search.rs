use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::pddl::{AtomId, AtomSet, GroundedAction, GroundedTask};

/// Mid-level action over instance ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MidAction {
    GoTo(String),
    Search(String),
    PickUp(String),
    Place(String, String),
    Slice(String, String),
    ToggleOn(String),
    ToggleOff(String),
    Open(String),
    Close(String),
    Pour(String, String),
    /// Schema outside the household vocabulary.
    Other {
        name: String,
        args: Vec<String>,
    },
}

impl MidAction {
    pub fn from_grounded(name: &str, args: &[String]) -> Self {
        let a = |i: usize| args.get(i).cloned().unwrap_or_default();
        match (name.to_ascii_lowercase().as_str(), args.len()) {
            ("goto", 1) => MidAction::GoTo(a(0)),
            ("search", 1) => MidAction::Search(a(0)),
            ("pickup", 1) => MidAction::PickUp(a(0)),
            ("place", 2) => MidAction::Place(a(0), a(1)),
            ("slice", 2) => MidAction::Slice(a(0), a(1)),
            ("toggleon", 1) => MidAction::ToggleOn(a(0)),
            ("toggleoff", 1) => MidAction::ToggleOff(a(0)),
            ("open", 1) => MidAction::Open(a(0)),
            ("close", 1) => MidAction::Close(a(0)),
            ("pour", 2) => MidAction::Pour(a(0), a(1)),
            _ => MidAction::Other {
                name: name.to_string(),
                args: args.to_vec(),
            },
        }
    }

    pub fn name(&self) -> &str {
        match self {
            MidAction::GoTo(_) => "GoTo",
            MidAction::Search(_) => "Search",
            MidAction::PickUp(_) => "PickUp",
            MidAction::Place(..) => "Place",
            MidAction::Slice(..) => "Slice",
            MidAction::ToggleOn(_) => "ToggleOn",
            MidAction::ToggleOff(_) => "ToggleOff",
            MidAction::Open(_) => "Open",
            MidAction::Close(_) => "Close",
            MidAction::Pour(..) => "Pour",
            MidAction::Other { name, .. } => name,
        }
    }

    pub fn args(&self) -> Vec<&str> {
        match self {
            MidAction::GoTo(x)
            | MidAction::Search(x)
            | MidAction::PickUp(x)
            | MidAction::ToggleOn(x)
            | MidAction::ToggleOff(x)
            | MidAction::Open(x)
            | MidAction::Close(x) => vec![x],
            MidAction::Place(x, y) | MidAction::Slice(x, y) | MidAction::Pour(x, y) => vec![x, y],
            MidAction::Other { args, .. } => args.iter().map(String::as_str).collect(),
        }
    }

    /// Instance the agent must reach and see to execute the action.
    pub fn target(&self) -> Option<&str> {
        match self {
            MidAction::Place(_, r) | MidAction::Pour(_, r) => Some(r),
            MidAction::Slice(x, _) => Some(x),
            MidAction::Other { args, .. } => args.first().map(String::as_str),
            other => other.args().first().copied(),
        }
    }
}

impl fmt::Display for MidAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.args().join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidLevelPlan {
    pub actions: Vec<MidAction>,
    /// Grounded action index per step, for validation.
    pub indices: Vec<usize>,
    pub cost: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanOutcome {
    Solved(MidLevelPlan),
    GoalAlreadySatisfied,
    NoSolution,
    Timeout,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub expansions: u64,
    pub generated: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchConfig {
    /// Ignore the heuristic and expand by accumulated cost.
    pub uniform_cost: bool,
}

/// Delete relaxation with one unary-effect operator per (action, effect branch).
struct Relaxed {
    pre: Vec<Vec<AtomId>>,
    add: Vec<Vec<AtomId>>,
    cost: Vec<u64>,
    /// Operators with no preconditions.
    free: Vec<usize>,
    /// Atom -> operators listing it as a precondition.
    watch: Vec<Vec<usize>>,
}

impl Relaxed {
    fn new(task: &GroundedTask) -> Self {
        let n = task.atom_count();
        let mut r = Relaxed {
            pre: Vec::new(),
            add: Vec::new(),
            cost: Vec::new(),
            free: Vec::new(),
            watch: vec![Vec::new(); n],
        };
        for a in &task.actions {
            let mut push = |pre: Vec<AtomId>, add: Vec<AtomId>| {
                if add.is_empty() {
                    return;
                }
                let mut pre = pre;
                pre.sort_unstable();
                pre.dedup();
                let id = r.pre.len();
                if pre.is_empty() {
                    r.free.push(id);
                }
                for &p in &pre {
                    r.watch[p as usize].push(id);
                }
                r.pre.push(pre);
                r.add.push(add);
                r.cost.push(a.cost as u64);
            };
            push(a.pre_pos.clone(), a.add.clone());
            for c in &a.cond {
                let mut pre = a.pre_pos.clone();
                pre.extend_from_slice(&c.pos);
                push(pre, c.add.clone());
            }
        }
        r
    }

    /// Additive heuristic; `None` when some goal atom is relaxed-unreachable.
    fn hadd(&self, state: &AtomSet, goal: &[AtomId], scratch: &mut Scratch) -> Option<u64> {
        let n = self.watch.len();
        scratch.cost.clear();
        scratch.cost.resize(n, u64::MAX);
        scratch.missing.clear();
        scratch
            .missing
            .extend(self.pre.iter().map(|p| p.len() as u32));
        scratch.sum.clear();
        scratch.sum.resize(self.pre.len(), 0);
        let mut heap = BinaryHeap::new();
        for a in state.iter() {
            scratch.cost[a as usize] = 0;
            heap.push(Reverse((0u64, a)));
        }
        let fire = |op: usize,
                    base: u64,
                    cost: &mut Vec<u64>,
                    heap: &mut BinaryHeap<Reverse<(u64, AtomId)>>| {
            let c = base.saturating_add(self.cost[op]);
            for &q in &self.add[op] {
                if c < cost[q as usize] {
                    cost[q as usize] = c;
                    heap.push(Reverse((c, q)));
                }
            }
        };
        for &op in &self.free {
            fire(op, 0, &mut scratch.cost, &mut heap);
        }
        while let Some(Reverse((c, a))) = heap.pop() {
            if c > scratch.cost[a as usize] {
                continue;
            }
            for &op in &self.watch[a as usize] {
                scratch.sum[op] = scratch.sum[op].saturating_add(c);
                scratch.missing[op] -= 1;
                if scratch.missing[op] == 0 {
                    let base = scratch.sum[op];
                    fire(op, base, &mut scratch.cost, &mut heap);
                }
            }
        }
        let mut h = 0u64;
        for &g in goal {
            let c = scratch.cost[g as usize];
            if c == u64::MAX {
                return None;
            }
            h = h.saturating_add(c);
        }
        Some(h)
    }
}

#[derive(Default)]
struct Scratch {
    cost: Vec<u64>,
    missing: Vec<u32>,
    sum: Vec<u64>,
}

#[derive(PartialEq, Eq)]
struct OpenEntry {
    key: (u64, u64, usize, u64),
    node: usize,
}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key)
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Node {
    state: AtomSet,
    parent: usize,
    action: usize,
    g: u64,
}

/// Greedy best-first search with the additive delete-relaxation heuristic.
/// Open-list ties break on lower accumulated cost, lower grounded-action
/// index, then insertion order.
pub fn search_plan(task: &GroundedTask, timeout: Duration) -> PlanOutcome {
    search_plan_with(task, timeout, SearchConfig::default()).0
}

pub fn search_plan_with(
    task: &GroundedTask,
    timeout: Duration,
    config: SearchConfig,
) -> (PlanOutcome, SearchStats) {
    let start = Instant::now();
    let mut stats = SearchStats::default();
    if task.is_goal(&task.init) {
        return (PlanOutcome::GoalAlreadySatisfied, stats);
    }
    if task.goal_unsatisfiable {
        return (PlanOutcome::NoSolution, stats);
    }
    let relaxed = Relaxed::new(task);
    let mut scratch = Scratch::default();
    let eval = |s: &AtomSet, scratch: &mut Scratch| -> Option<u64> {
        if config.uniform_cost {
            return Some(0);
        }
        let neg = task.goal_neg.iter().filter(|&&a| s.contains(a)).count() as u64;
        relaxed.hadd(s, &task.goal_pos, scratch).map(|h| h + neg)
    };
    let Some(h0) = eval(&task.init, &mut scratch) else {
        return (PlanOutcome::NoSolution, stats);
    };

    let mut nodes = vec![Node {
        state: task.init.clone(),
        parent: usize::MAX,
        action: usize::MAX,
        g: 0,
    }];
    let mut seen: HashMap<AtomSet, u64> = HashMap::new();
    seen.insert(task.init.clone(), 0);
    let mut open = BinaryHeap::new();
    let mut fifo = 0u64;
    let primary = |h: u64, g: u64| if config.uniform_cost { g } else { h };
    open.push(OpenEntry {
        key: (primary(h0, 0), 0, 0, fifo),
        node: 0,
    });

    while let Some(OpenEntry { node, .. }) = open.pop() {
        if stats.expansions % 64 == 0 && start.elapsed() > timeout {
            return (PlanOutcome::Timeout, stats);
        }
        let state = nodes[node].state.clone();
        let g = nodes[node].g;
        if seen.get(&state).is_some_and(|&best| best < g) {
            continue;
        }
        if task.is_goal(&state) {
            return (PlanOutcome::Solved(extract(task, &nodes, node)), stats);
        }
        stats.expansions += 1;
        for (ai, a) in task.actions.iter().enumerate() {
            if !task.applicable(a, &state) {
                continue;
            }
            let next = task.successor(a, &state);
            let g2 = g + a.cost as u64;
            match seen.get(&next) {
                Some(&old) if old <= g2 => continue,
                _ => {}
            }
            stats.generated += 1;
            let Some(h) = eval(&next, &mut scratch) else {
                seen.insert(next, g2);
                continue;
            };
            seen.insert(next.clone(), g2);
            nodes.push(Node {
                state: next,
                parent: node,
                action: ai,
                g: g2,
            });
            fifo += 1;
            open.push(OpenEntry {
                key: (primary(h, g2), g2, ai, fifo),
                node: nodes.len() - 1,
            });
        }
    }
    (PlanOutcome::NoSolution, stats)
}

fn extract(task: &GroundedTask, nodes: &[Node], mut at: usize) -> MidLevelPlan {
    let mut indices = Vec::new();
    while nodes[at].parent != usize::MAX {
        indices.push(nodes[at].action);
        at = nodes[at].parent;
    }
    indices.reverse();
    plan_from_indices(task, indices)
}

pub fn plan_from_indices(task: &GroundedTask, indices: Vec<usize>) -> MidLevelPlan {
    let actions = indices
        .iter()
        .map(|&i| {
            let a: &GroundedAction = &task.actions[i];
            MidAction::from_grounded(&a.name, &a.args)
        })
        .collect();
    let cost = indices.iter().map(|&i| task.actions[i].cost as u64).sum();
    MidLevelPlan {
        actions,
        indices,
        cost,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanVerdict {
    pub valid: bool,
    /// Index of the first step whose preconditions fail; `Some(len)` when
    /// every step applies but the goal does not hold at the end.
    pub failing_step: Option<usize>,
    pub failed: Vec<String>,
}

/// Replays grounded action indices from the initial state.
pub fn validate_plan(indices: &[usize], task: &GroundedTask) -> PlanVerdict {
    let mut s = task.init.clone();
    for (step, &i) in indices.iter().enumerate() {
        let Some(a) = task.actions.get(i) else {
            return PlanVerdict {
                valid: false,
                failing_step: Some(step),
                failed: vec![format!("no grounded action {i}")],
            };
        };
        if !task.applicable(a, &s) {
            return PlanVerdict {
                valid: false,
                failing_step: Some(step),
                failed: task.failed_preconditions(a, &s),
            };
        }
        s = task.successor(a, &s);
    }
    if task.is_goal(&s) {
        PlanVerdict {
            valid: true,
            failing_step: None,
            failed: Vec::new(),
        }
    } else {
        PlanVerdict {
            valid: false,
            failing_step: Some(indices.len()),
            failed: vec!["goal".to_string()],
        }
    }
}
