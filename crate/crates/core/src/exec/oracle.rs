use std::collections::{BTreeMap, BTreeSet};

use crate::geom::{cell_center, Pose};
use crate::monitor::{satisfied_count, Subgoal, TrajectoryRecord, TrajectoryStep};
use crate::nav::{
    interaction_point, path_to_primitives, plan_path, CellState, NavGoalRegion, OccupancyGrid,
};
use crate::planner::{
    Belief, MidAction, MidLevelPlan, PlanOptions, PlanOutcome, PlanRequest, Planner, INTERACT_DIST,
};
use crate::sim::{Action, Manipulation, NoiseConfig, SceneSpec, Sim, TaskSpec};

use super::ExecError;

/// Oracle atoms of a ground-truth belief.
pub fn belief_atoms(b: &Belief) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for i in &b.instances {
        for (s, v) in &i.states {
            if *v {
                out.insert(format!("{s} {}", i.id));
            }
        }
        if let Some(p) = &i.parent {
            out.insert(format!("parentReceptacles {} {p}", i.id));
        }
        if i.held {
            out.insert(format!("isPickedUp {}", i.id));
        }
    }
    out
}

/// Per-condition satisfaction (count reached) against ground truth.
pub fn condition_vector(task: &TaskSpec, truth: &Belief, sim: &Sim) -> Vec<bool> {
    task.conditions
        .iter()
        .map(|c| {
            c.subgoal()
                .map(|s| satisfied_count(truth, &s, sim.affordances()) as u32 >= c.count)
                .unwrap_or(false)
        })
        .collect()
}

/// Accumulates oracle state diffs step by step.
#[derive(Debug, Clone)]
pub struct Recorder {
    pub record: TrajectoryRecord,
    prev: BTreeSet<String>,
    task: TaskSpec,
}

impl Recorder {
    pub fn new(sim: &Sim, task: &TaskSpec) -> Self {
        let prev = belief_atoms(&sim.truth());
        Recorder {
            record: TrajectoryRecord {
                initial: prev.clone(),
                steps: Vec::new(),
            },
            prev,
            task: task.clone(),
        }
    }

    pub fn push(&mut self, action: &Action, sim: &Sim) {
        let truth = sim.truth();
        let now = belief_atoms(&truth);
        self.record.steps.push(TrajectoryStep {
            action: action.to_string(),
            added: now.difference(&self.prev).cloned().collect(),
            removed: self.prev.difference(&now).cloned().collect(),
            satisfied: condition_vector(&self.task, &truth, sim),
        });
        self.prev = now;
    }
}

/// Outcome of the full-observability reference solver.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub steps: u32,
    pub actions: Vec<Action>,
    pub trajectory: TrajectoryRecord,
}

struct Oracle<'a> {
    sim: Sim,
    planner: &'a Planner,
    rec: Recorder,
    actions: Vec<Action>,
}

fn true_grid(sim: &Sim) -> OccupancyGrid {
    let d = sim.dims();
    let mut g = OccupancyGrid::new(d[0], d[1], CellState::Blocked);
    for y in 0..d[1] {
        for x in 0..d[0] {
            if sim.walkable((x, y)) {
                g.set((x, y), CellState::Free);
            }
        }
    }
    g
}

impl Oracle<'_> {
    fn act(&mut self, a: Action) -> Result<(), ExecError> {
        let (r, _) = self.sim.step(a);
        self.rec.push(&a, &self.sim);
        self.actions.push(a);
        if !r.success {
            return Err(ExecError::Oracle(format!("{a} failed: {:?}", r.reason)));
        }
        Ok(())
    }

    /// Walks to the nearest cell (by path length) from which the target is
    /// in reach and rendered.
    fn goto(&mut self, id: &str) -> Result<(), ExecError> {
        // contents of a closed container are approached through the container
        let truth = self.sim.truth();
        let mut view = id.to_string();
        let mut cur = truth.get(id).and_then(|i| i.parent.clone());
        while let Some(p) = cur {
            let pi = truth.get(&p);
            if pi.is_some_and(|i| {
                self.sim.affordances().get(&i.category).openable && !i.is("isOpen")
            }) {
                view = p.clone();
            }
            cur = pi.and_then(|i| i.parent.clone());
        }
        let id = view.as_str();
        let center = self
            .sim
            .instance_center(id)
            .ok_or_else(|| ExecError::Oracle(format!("no instance {id}")))?;
        let grid = true_grid(&self.sim);
        let mut region = NavGoalRegion::around(&grid, center, INTERACT_DIST, false);
        loop {
            let start = self.sim.pose();
            let path = plan_path(&grid, start.cell, &region, false)
                .map_err(|_| ExecError::Oracle(format!("{id} unreachable")))?;
            let end = path.last().copied().unwrap_or(start.cell);
            let (h, p) = region.goals[&end];
            let mut pitches = vec![p];
            pitches.extend([-60, -30, 0, 30, 60].into_iter().filter(|q| *q != p));
            let pose = pitches
                .into_iter()
                .map(|q| Pose {
                    cell: end,
                    heading: h,
                    pitch: q,
                })
                .find(|pose| !self.sim.pixels_of_at(pose, id).is_empty());
            match pose {
                Some(pose) => {
                    for prim in path_to_primitives(&path, start, pose.heading, pose.pitch) {
                        self.act(Action::Nav(prim))?;
                    }
                    return Ok(());
                }
                None => {
                    region.goals.remove(&end);
                    if region.is_empty() {
                        return Err(ExecError::Oracle(format!("{id} never visible")));
                    }
                }
            }
        }
    }

    fn manipulate(&mut self, kind: Manipulation, target: &str) -> Result<(), ExecError> {
        let reach = {
            let c = self.sim.instance_center(target).unwrap_or_default();
            let e = cell_center(self.sim.pose().cell);
            ((c[0] - e[0]).powi(2) + (c[1] - e[1]).powi(2)).sqrt()
        };
        if reach > INTERACT_DIST || self.sim.pixels_of(target).is_empty() {
            self.goto(target)?;
        }
        let pixel = interaction_point(&self.sim.pixels_of(target))
            .map_err(|_| ExecError::Oracle(format!("{target} not visible")))?;
        self.act(Action::Interact { kind, pixel })
            .map_err(|e| ExecError::Oracle(format!("{e} (target {target})")))
    }

    fn execute(&mut self, a: &MidAction) -> Result<(), ExecError> {
        match a {
            MidAction::GoTo(x) => self.goto(x),
            MidAction::PickUp(x) => self.manipulate(Manipulation::PickUp, x),
            MidAction::Place(_, r) => self.manipulate(Manipulation::Place, r),
            MidAction::Slice(x, _) => self.manipulate(Manipulation::Slice, x),
            MidAction::ToggleOn(x) => self.manipulate(Manipulation::ToggleOn, x),
            MidAction::ToggleOff(x) => self.manipulate(Manipulation::ToggleOff, x),
            MidAction::Open(x) => self.manipulate(Manipulation::Open, x),
            MidAction::Close(x) => self.manipulate(Manipulation::Close, x),
            MidAction::Pour(_, y) => self.manipulate(Manipulation::Pour, y),
            other => Err(ExecError::Oracle(format!("unexpected action {other}"))),
        }
    }

    fn solve(&mut self, sg: &Subgoal, k: usize) -> Result<(), ExecError> {
        let opts = PlanOptions::default();
        for _ in 0..3 {
            let truth = self.sim.truth();
            if satisfied_count(&truth, sg, self.sim.affordances()) >= k {
                return Ok(());
            }
            let r = self
                .planner
                .plan(
                    PlanRequest {
                        subgoal: sg,
                        belief: &truth,
                    },
                    &opts,
                )
                .map_err(|e| ExecError::Oracle(e.to_string()))?;
            match r.outcome {
                PlanOutcome::Solved(plan) => {
                    for a in &plan.actions {
                        self.execute(a)?;
                    }
                }
                o => return Err(ExecError::Oracle(format!("{sg}: {o:?}"))),
            }
        }
        let truth = self.sim.truth();
        if satisfied_count(&truth, sg, self.sim.affordances()) >= k {
            Ok(())
        } else {
            Err(ExecError::Oracle(format!("{sg} unmet after planning")))
        }
    }
}

/// Solves the task with ground-truth state and no noise.
pub fn oracle_run(scene: &SceneSpec, task: &TaskSpec) -> Result<OracleRun, ExecError> {
    let sim =
        Sim::new(scene, NoiseConfig::default(), 0).map_err(|e| ExecError::Oracle(e.to_string()))?;
    let planner = Planner::household();
    let rec = Recorder::new(&sim, task);
    let mut o = Oracle {
        sim,
        planner: &planner,
        rec,
        actions: Vec::new(),
    };
    let mut seen: BTreeMap<Subgoal, usize> = BTreeMap::new();
    for sg in task
        .subgoals()
        .map_err(|e| ExecError::Oracle(e.to_string()))?
    {
        let k = seen.entry(sg.clone()).or_default();
        *k += 1;
        let k = *k;
        o.solve(&sg, k)?;
    }
    let goals = crate::sim::check_goal_conditions(task, &o.sim.truth(), o.sim.affordances())
        .map_err(|e| ExecError::Oracle(e.to_string()))?;
    if !goals.success() {
        return Err(ExecError::Oracle(format!(
            "goal conditions {}/{}",
            goals.satisfied, goals.total
        )));
    }
    Ok(OracleRun {
        steps: o.sim.steps(),
        actions: o.actions,
        trajectory: o.rec.record,
    })
}

/// Executes a mid-level plan in `sim` with ground-truth navigation. Every
/// primitive must succeed.
pub fn execute_plan(sim: Sim, plan: &MidLevelPlan) -> Result<Sim, ExecError> {
    let planner = Planner::household();
    let task = TaskSpec {
        name: String::new(),
        conditions: Vec::new(),
    };
    let rec = Recorder::new(&sim, &task);
    let mut o = Oracle {
        sim,
        planner: &planner,
        rec,
        actions: Vec::new(),
    };
    for a in &plan.actions {
        o.execute(a)?;
    }
    Ok(o.sim)
}

pub fn oracle_length(scene: &SceneSpec, task: &TaskSpec) -> Result<u32, ExecError> {
    oracle_run(scene, task).map(|r| r.steps)
}
