use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::geom::{cell_center, Cell, Pose, PITCH_LIMIT, PITCH_STEP};
use crate::monitor::{satisfied_count, Subgoal, SubgoalState, SubgoalStatus};
use crate::nav::{
    interaction_point, path_to_primitives, plan_path, select_search_target, view_pose,
    NavGoalRegion, OccupancyGrid, SearchTarget,
};
use crate::planner::{
    dump_plan, euclid, is_dummy, split_id, MidAction, PlanOptions, PlanOutcome, PlanRequest,
    Planner, INTERACT_DIST,
};
use crate::sim::{
    check_goal_conditions, Action, Manipulation, MetricsReport, Observation, Primitive, SceneSpec,
    Sim, TaskSpec,
};
use crate::world::WorldModel;

use super::frames::dump_frame;
use super::types::*;
use super::ExecError;

/// Preferred standing distance from a navigation target.
const APPROACH_RADIUS: f64 = 0.75;
/// Closer standing distance used after a not-near rejection.
const CLOSE_RADIUS: f64 = 0.5;
/// Path re-plans allowed within one navigation call.
const MAX_PATH_REPLANS: u32 = 40;
/// Replans triggered by resolved searches within one subgoal.
const MAX_SEARCH_REPLANS: u32 = 10;

/// Why control left the current plan.
#[derive(Debug)]
enum Fault {
    /// Episode step or failure budget spent.
    EpisodeBudget,
    /// Per-subgoal step budget spent.
    SubgoalBudget,
    Exception(ExceptionKind),
    /// A searched-for object was found; plan again with it in view.
    Found,
}

type Flow<T> = Result<T, Fault>;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Frame {
    Original {
        subgoal: Subgoal,
        occurrence: usize,
    },
    Clear {
        receptacle: String,
        occupant: String,
    },
    PutDown,
}

impl Frame {
    fn label(&self) -> String {
        match self {
            Frame::Original { subgoal, .. } => subgoal.to_string(),
            Frame::Clear { occupant, .. } => {
                format!("({}, isPlacedTo, CounterTop)", split_id(occupant).0)
            }
            Frame::PutDown => "(held, isPlacedTo, any)".to_string(),
        }
    }
}

enum NavTarget {
    Instance(String, f64),
    Cell(Cell),
}

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub trace: Vec<TraceRecord>,
    pub summary: EpisodeSummary,
    pub plan_stats: Vec<PlanStat>,
    pub actions: Vec<Action>,
}

struct Agent<'a> {
    sim: Sim,
    world: WorldModel,
    planner: &'a Planner,
    cfg: &'a ExecConfig,
    rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
    actions: Vec<Action>,
    blocked: BTreeSet<Cell>,
    opened: BTreeSet<String>,
    sg_steps: u32,
    active: Option<String>,
    plan_remaining: usize,
    exceptions: BTreeMap<String, u32>,
    recoveries: BTreeMap<String, u32>,
    plan_stats: Vec<PlanStat>,
    last_search: Option<SearchTarget>,
}

fn digest(world: &WorldModel) -> String {
    let bytes = serde_json::to_vec(&world.snapshot()).expect("belief serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

fn manipulation_of(a: &MidAction) -> Option<Manipulation> {
    Some(match a {
        MidAction::PickUp(_) => Manipulation::PickUp,
        MidAction::Place(..) => Manipulation::Place,
        MidAction::Slice(..) => Manipulation::Slice,
        MidAction::ToggleOn(_) => Manipulation::ToggleOn,
        MidAction::ToggleOff(_) => Manipulation::ToggleOff,
        MidAction::Open(_) => Manipulation::Open,
        MidAction::Close(_) => Manipulation::Close,
        MidAction::Pour(..) => Manipulation::Pour,
        _ => return None,
    })
}

impl<'a> Agent<'a> {
    fn new(
        scene: &SceneSpec,
        planner: &'a Planner,
        cfg: &'a ExecConfig,
    ) -> Result<Self, ExecError> {
        let sim = Sim::with_tables(
            scene,
            cfg.noise,
            cfg.seed,
            planner.affordances.clone(),
            crate::geom::Camera::default(),
        )?;
        let d = sim.dims();
        let world = WorldModel::new(d, sim.camera(), planner.affordances.clone(), sim.pose());
        Ok(Agent {
            sim,
            world,
            planner,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5ea4_c400_0000),
            trace: Vec::new(),
            actions: Vec::new(),
            blocked: BTreeSet::new(),
            opened: BTreeSet::new(),
            sg_steps: 0,
            active: None,
            plan_remaining: 0,
            exceptions: BTreeMap::new(),
            recoveries: BTreeMap::new(),
            plan_stats: Vec::new(),
            last_search: None,
        })
    }

    fn pose(&self) -> Pose {
        self.sim.pose()
    }

    fn check_budget(&self) -> Flow<()> {
        let b = &self.cfg.budget;
        if self.sim.steps() >= b.max_steps || self.sim.failures() >= b.max_failures {
            return Err(Fault::EpisodeBudget);
        }
        if self.sg_steps >= b.subgoal_steps {
            return Err(Fault::SubgoalBudget);
        }
        Ok(())
    }

    /// Issues one action and logs it. The caller must follow with `observe`.
    fn step(
        &mut self,
        action: Action,
    ) -> Flow<(bool, Option<crate::sim::FailureReason>, Observation)> {
        self.check_budget()?;
        let (r, obs) = self.sim.step(action);
        self.sg_steps += 1;
        self.actions.push(action);
        if let Some(dir) = &self.cfg.dump_frames {
            if let Err(e) = dump_frame(dir, self.sim.steps(), &obs) {
                log::warn!("frame dump failed: {e}");
            }
        }
        debug!("step {} {action} -> {:?}", self.sim.steps(), r.reason);
        self.trace.push(TraceRecord {
            step: self.sim.steps(),
            pose: obs.pose,
            action: Some(action.to_string()),
            result: Some(r.reason.map_or_else(|| "ok".to_string(), |x| x.to_string())),
            exception: None,
            recovery: None,
            active_subgoal: self.active.clone(),
            plan_remaining: self.plan_remaining,
            belief_digest: String::new(),
            metrics: None,
        });
        Ok((r.success, r.reason, obs))
    }

    /// Integrates an observation and seals the latest trace record.
    fn observe(&mut self, obs: &Observation) {
        self.world.update(obs);
        let d = digest(&self.world);
        if let Some(last) = self.trace.last_mut() {
            if last.belief_digest.is_empty() {
                last.belief_digest = d;
            }
        }
    }

    fn nav_step(&mut self, p: Primitive) -> Flow<bool> {
        let (ok, _, obs) = self.step(Action::Nav(p))?;
        self.observe(&obs);
        Ok(ok)
    }

    /// Records an exception with the recovery chosen for it. Post-execution
    /// exceptions annotate the step that raised them.
    fn note(&mut self, kind: &ExceptionKind, decision: &RecoveryDecision) {
        info!("exception {kind} -> {decision}");
        *self.exceptions.entry(kind.name().to_string()).or_default() += 1;
        *self
            .recoveries
            .entry(decision.name().to_string())
            .or_default() += 1;
        let rec = ExceptionRecord {
            kind: kind.clone(),
            phase: kind.phase(),
        };
        let step = self.sim.steps();
        if let Some(last) = self.trace.last_mut() {
            if kind.phase() == Phase::PostExecution
                && last.step == step
                && last.exception.is_none()
                && last.action.is_some()
            {
                last.exception = Some(rec);
                last.recovery = Some(decision.to_string());
                return;
            }
        }
        self.trace.push(TraceRecord {
            step,
            pose: self.pose(),
            action: None,
            result: None,
            exception: Some(rec),
            recovery: Some(decision.to_string()),
            active_subgoal: self.active.clone(),
            plan_remaining: self.plan_remaining,
            belief_digest: digest(&self.world),
            metrics: None,
        });
    }

    fn ctx(&self, replans: u32) -> RecoveryContext {
        RecoveryContext {
            replanning: self.cfg.replanning,
            replans_used: replans,
            replan_cap: self.cfg.budget.replans,
            ..RecoveryContext::default()
        }
    }

    fn grid(&self) -> OccupancyGrid {
        OccupancyGrid::from_map(&self.world.map, self.world.visited(), &self.blocked)
    }

    fn centroid(&self, id: &str) -> Option<[f64; 3]> {
        self.world.table.get(id).map(|r| r.centroid())
    }

    fn horizontal_reach(&self, id: &str) -> f64 {
        let Some(c) = self.centroid(id) else {
            return f64::INFINITY;
        };
        let e = self.pose().eye();
        ((c[0] - e[0]).powi(2) + (c[1] - e[1]).powi(2)).sqrt()
    }

    /// Turns and tilts in place to the given heading and pitch.
    fn face(&mut self, heading: crate::geom::Heading, pitch: i32) -> Flow<()> {
        for p in path_to_primitives(&[], self.pose(), heading, pitch) {
            self.nav_step(p)?;
        }
        Ok(())
    }

    fn goal_region(&self, grid: &OccupancyGrid, target: &NavTarget) -> Flow<NavGoalRegion> {
        match target {
            NavTarget::Instance(id, radius) => {
                let c = self
                    .centroid(id)
                    .ok_or(Fault::Exception(ExceptionKind::TargetUnreachable))?;
                let mut region = NavGoalRegion::around(grid, c, *radius, false);
                if region.is_empty() {
                    region = NavGoalRegion::around(grid, c, INTERACT_DIST, false);
                }
                if region.is_empty() {
                    region = NavGoalRegion::around(grid, c, INTERACT_DIST, true);
                }
                Ok(region)
            }
            NavTarget::Cell(c) => Ok(NavGoalRegion::single(*c, self.pose().heading, -PITCH_STEP)),
        }
    }

    /// Walks to the target, re-planning when new obstacles cut the path.
    fn navigate(&mut self, target: NavTarget) -> Flow<()> {
        let mut replans = 0;
        'plan: loop {
            if replans > MAX_PATH_REPLANS {
                return Err(Fault::Exception(ExceptionKind::TargetUnreachable));
            }
            replans += 1;
            let grid = self.grid();
            let region = self.goal_region(&grid, &target)?;
            let start = self.pose();
            let path = match plan_path(&grid, start.cell, &region, false)
                .or_else(|_| plan_path(&grid, start.cell, &region, true))
            {
                Ok(p) => p,
                Err(e) => {
                    let kind =
                        if matches!(target, NavTarget::Instance(..)) && !self.blocked.is_empty() {
                            classify_exception(Incident::Nav(&e))
                        } else {
                            classify_exception(Incident::TargetLost)
                        };
                    return Err(Fault::Exception(
                        kind.expect("navigation failure is exceptional"),
                    ));
                }
            };
            let end = path.last().copied().unwrap_or(start.cell);
            let (h, p) = region.goals[&end];
            let mut cur = start;
            for (i, &cell) in path.iter().enumerate() {
                let heading =
                    crate::geom::Heading::from_delta((cell.0 - cur.cell.0, cell.1 - cur.cell.1))
                        .expect("adjacent path cells");
                self.face(heading, self.pose().pitch)?;
                if !self.nav_step(Primitive::Forward)? {
                    self.blocked.insert(cell);
                    let kind = ExceptionKind::PathBlocked;
                    let d = recover(&kind, &self.ctx(0));
                    self.note(&kind, &d);
                    continue 'plan;
                }
                cur = self.pose();
                let g = self.grid();
                if path[i + 1..]
                    .iter()
                    .any(|c| g.get(*c) == crate::nav::CellState::Blocked)
                {
                    continue 'plan;
                }
                if let NavTarget::Instance(id, r) = &target {
                    // the target estimate may move as more of it is seen
                    if self.centroid(id).is_none() {
                        return Err(Fault::Exception(ExceptionKind::TargetUnreachable));
                    }
                    if i + 1 == path.len() && self.horizontal_reach(id) > r.max(INTERACT_DIST) {
                        continue 'plan;
                    }
                }
            }
            let (h, p) = match &target {
                NavTarget::Instance(id, _) => match self.centroid(id) {
                    Some(c) => view_pose(cell_center(self.pose().cell), c),
                    None => (h, p),
                },
                NavTarget::Cell(_) => (h, p),
            };
            self.face(h, p)?;
            return Ok(());
        }
    }

    /// Pixel to act on for `id`, tilting and approaching when it is not in
    /// the current frame.
    fn ground(&mut self, id: &str, replans: u32) -> Flow<(usize, usize)> {
        let mut regrounded = false;
        loop {
            if let Ok(px) = interaction_point(&self.world.pixels_of(id)) {
                return Ok(px);
            }
            let Some(c) = self.centroid(id) else {
                return Err(Fault::Exception(ExceptionKind::TargetUnreachable));
            };
            let (h, p) = view_pose(cell_center(self.pose().cell), c);
            self.face(h, p)?;
            let mut pitches = vec![p];
            for q in [-PITCH_STEP, PITCH_STEP, -2 * PITCH_STEP, 2 * PITCH_STEP] {
                pitches.push((p + q).clamp(-PITCH_LIMIT, PITCH_LIMIT));
            }
            for q in pitches {
                if let Ok(px) = interaction_point(&self.world.pixels_of(id)) {
                    return Ok(px);
                }
                self.face(h, q)?;
            }
            if let Ok(px) = interaction_point(&self.world.pixels_of(id)) {
                return Ok(px);
            }
            let kind = classify_exception(Incident::Nav(&crate::nav::NavError::NotVisible))
                .expect("exceptional");
            let mut ctx = self.ctx(replans);
            ctx.regrounded = regrounded;
            let d = recover(&kind, &ctx);
            if d != RecoveryDecision::Reground {
                return Err(Fault::Exception(kind));
            }
            self.note(&kind, &d);
            regrounded = true;
            self.navigate(NavTarget::Instance(id.to_string(), CLOSE_RADIUS))?;
        }
    }

    fn category(&self, id: &str) -> String {
        self.world
            .table
            .get(id)
            .map_or_else(|| split_id(id).0.to_string(), |r| r.category.clone())
    }

    /// Whether the post-step observation shows the action's expected effect.
    fn verified(&self, a: &MidAction, pixel: (usize, usize), obs: &Observation) -> bool {
        let at = obs.detections.get(&obs.key_at(pixel.0, pixel.1));
        let label = |id: &str, pred: &str, want: bool| {
            let cat = self.category(id);
            let det = at
                .filter(|d| d.category == cat)
                .or_else(|| obs.detections.values().find(|d| d.category == cat));
            det.and_then(|d| d.labels.get(pred))
                .is_none_or(|v| *v == want)
        };
        match a {
            MidAction::PickUp(x) => obs.holding.as_deref() == Some(self.category(x).as_str()),
            MidAction::Place(..) => obs.holding.is_none(),
            MidAction::Slice(x, _) => at.is_none_or(|d| d.category != self.category(x)),
            MidAction::ToggleOn(x) => label(x, "isToggled", true),
            MidAction::ToggleOff(x) => label(x, "isToggled", false),
            MidAction::Open(x) => label(x, "isOpen", true),
            MidAction::Close(x) => label(x, "isOpen", false),
            MidAction::Pour(_, y) => {
                !self.planner.affordances.get(&self.category(y)).fillable
                    || label(y, "isFilledWithLiquid", true)
            }
            _ => true,
        }
    }

    /// Grounds and issues one manipulation, verifying its effect.
    fn manipulate(&mut self, a: &MidAction, replans: u32) -> Flow<()> {
        let kind = manipulation_of(a).expect("manipulation action");
        let target = a
            .target()
            .ok_or(Fault::Exception(ExceptionKind::TargetUnreachable))?
            .to_string();
        if self.world.table.get(&target).is_none() {
            return Err(Fault::Exception(ExceptionKind::TargetUnreachable));
        }
        if self.horizontal_reach(&target) > INTERACT_DIST {
            self.navigate(NavTarget::Instance(target.clone(), APPROACH_RADIUS))?;
        }
        let mut retried = false;
        let mut approached = false;
        loop {
            let pixel = self.ground(&target, replans)?;
            let (ok, reason, obs) = self.step(Action::Interact { kind, pixel })?;
            if !ok {
                self.observe(&obs);
                if reason == Some(crate::sim::FailureReason::NotNear) && !approached {
                    approached = true;
                    self.navigate(NavTarget::Instance(target.clone(), CLOSE_RADIUS))?;
                    continue;
                }
                let r = crate::sim::ActionResult {
                    success: false,
                    reason,
                };
                let exc =
                    classify_exception(Incident::Env(&r)).expect("failed action is exceptional");
                return Err(Fault::Exception(exc));
            }
            if self.verified(a, pixel, &obs) {
                if let Err(e) = self.world.apply_action_effect(a) {
                    debug!("effect not modeled: {e}");
                }
                self.observe(&obs);
                return Ok(());
            }
            self.observe(&obs);
            let exc = classify_exception(Incident::Unverified).expect("exceptional");
            let mut ctx = self.ctx(replans);
            ctx.retried = retried;
            let d = recover(&exc, &ctx);
            if d != RecoveryDecision::Retry {
                return Err(Fault::Exception(exc));
            }
            self.note(&exc, &d);
            retried = true;
        }
    }

    fn found(&self, category: &str) -> bool {
        self.world
            .table
            .records
            .iter()
            .any(|r| r.category == category)
    }

    /// Looks around at a few pitches from the current cell.
    fn scan(&mut self, category: &str) -> Flow<bool> {
        let h = self.pose().heading;
        for q in [-2 * PITCH_STEP, 0, -PITCH_STEP] {
            if self.found(category) {
                return Ok(true);
            }
            self.face(h, q)?;
        }
        Ok(self.found(category))
    }

    /// Explores until an instance of `category` is registered: known closed
    /// containers first, then farthest instances or frontier cells.
    fn search(&mut self, category: &str) -> Flow<()> {
        let inner = |s: &mut Self| -> Flow<()> {
            let mut idle = 0;
            loop {
                if s.found(category) {
                    return Ok(());
                }
                let steps_before = s.sim.steps();
                let eye = s.pose().eye();
                let aff = &s.planner.affordances;
                let closed = s
                    .world
                    .table
                    .records
                    .iter()
                    .filter(|r| aff.get(&r.category).openable && r.state("isOpen") != Some(true))
                    .filter(|r| !s.opened.contains(&r.id))
                    .min_by(|a, b| euclid(a.centroid(), eye).total_cmp(&euclid(b.centroid(), eye)))
                    .map(|r| r.id.clone());
                if let Some(c) = closed {
                    s.opened.insert(c.clone());
                    match s.manipulate(&MidAction::Open(c), 0) {
                        Ok(()) => {
                            s.scan(category)?;
                        }
                        Err(Fault::Exception(e)) => debug!("opening during search failed: {e}"),
                        Err(f) => return Err(f),
                    }
                    continue;
                }
                let grid = s.grid();
                let pose = s.pose();
                let target = match select_search_target(
                    &s.world.table,
                    &pose,
                    &grid,
                    s.last_search.as_ref(),
                    &mut s.rng,
                ) {
                    Ok(t) => t,
                    Err(e) => {
                        return Err(Fault::Exception(
                            classify_exception(Incident::Nav(&e)).expect("exceptional"),
                        ))
                    }
                };
                s.last_search = Some(target.clone());
                let nav = match &target {
                    SearchTarget::Instance(id) => NavTarget::Instance(id.clone(), INTERACT_DIST),
                    SearchTarget::Frontier(c) => NavTarget::Cell(*c),
                };
                match s.navigate(nav) {
                    Ok(()) | Err(Fault::Exception(_)) => {}
                    Err(f) => return Err(f),
                }
                if s.pose().pitch != -PITCH_STEP {
                    let h = s.pose().heading;
                    s.face(h, -PITCH_STEP)?;
                }
                for _ in 0..4 {
                    if s.found(category) {
                        return Ok(());
                    }
                    s.nav_step(Primitive::TurnLeft)?;
                }
                idle = if s.sim.steps() == steps_before {
                    idle + 1
                } else {
                    0
                };
                if idle > 3 {
                    return Err(Fault::Exception(ExceptionKind::ObjectNotFoundAfterSearch));
                }
            }
        };
        match inner(self) {
            Err(Fault::SubgoalBudget) => {
                Err(Fault::Exception(ExceptionKind::ObjectNotFoundAfterSearch))
            }
            r => r,
        }
    }

    fn frame_done(&self, f: &Frame) -> bool {
        match f {
            Frame::Original {
                subgoal,
                occurrence,
            } => {
                satisfied_count(&self.world.snapshot(), subgoal, &self.planner.affordances)
                    >= *occurrence
            }
            Frame::Clear {
                receptacle,
                occupant,
            } => self
                .world
                .table
                .get(occupant)
                .is_none_or(|r| !r.held && r.parent.as_deref() != Some(receptacle.as_str())),
            Frame::PutDown => !self.world.table.records.iter().any(|r| r.held),
        }
    }

    fn held(&self) -> Option<String> {
        self.world
            .table
            .records
            .iter()
            .find(|r| r.held)
            .map(|r| r.id.clone())
    }

    /// Nearest non-full receptacle that `item` can rest on; counter tops first.
    fn free_receptacle(&self, item: &str, exclude: &[&str]) -> Option<String> {
        let belief = self.world.snapshot();
        let aff = &self.planner.affordances;
        let cat = self.category(item);
        let eye = self.pose().eye();
        belief
            .instances
            .iter()
            .filter(|r| !exclude.contains(&r.id.as_str()) && r.id != item && !r.held)
            .filter(|r| {
                aff.get(&r.category).receptacle.is_some() && aff.can_rest_on(&cat, &r.category)
            })
            .filter(|r| !aff.get(&r.category).openable || r.is("isOpen"))
            .filter(|r| {
                let cap = r.capacity.or(aff.capacity(&r.category)).unwrap_or(0) as usize;
                belief.children(&r.id).count() < cap
            })
            .min_by(|a, b| {
                let rank = |r: &crate::planner::BeliefInstance| {
                    if r.category == "CounterTop" {
                        0
                    } else if aff.get(&r.category).surface {
                        1
                    } else {
                        2
                    }
                };
                rank(a)
                    .cmp(&rank(b))
                    .then(euclid(a.centroid, eye).total_cmp(&euclid(b.centroid, eye)))
                    .then(a.id.cmp(&b.id))
            })
            .map(|r| r.id.clone())
    }

    fn plan_frame(
        &mut self,
        frame: &Frame,
        prune: bool,
    ) -> Result<Option<Vec<MidAction>>, ExceptionKind> {
        match frame {
            Frame::Original { subgoal, .. } => {
                let belief = self.world.snapshot();
                let opts = PlanOptions {
                    timeout: self.cfg.timeout,
                    allow_unobserved: self.cfg.search,
                    prune,
                    ..PlanOptions::default()
                };
                let r = self
                    .planner
                    .plan(
                        PlanRequest {
                            subgoal,
                            belief: &belief,
                        },
                        &opts,
                    )
                    .map_err(|e| {
                        log::warn!("planner error: {e}");
                        ExceptionKind::NoPlanFound
                    })?;
                let n = self.plan_stats.len();
                if let Some(dir) = &self.cfg.dump_plans {
                    if let Err(e) = dump_plan(dir, &format!("plan_{n:03}"), &r) {
                        log::warn!("plan dump failed: {e}");
                    }
                }
                self.plan_stats.push(PlanStat {
                    elapsed: r.elapsed,
                    expansions: r.stats.expansions,
                    grounded_actions: r.grounded_actions,
                    solved: matches!(r.outcome, PlanOutcome::Solved(_)),
                });
                match r.outcome {
                    PlanOutcome::Solved(p) => Ok(Some(p.actions)),
                    PlanOutcome::GoalAlreadySatisfied => Ok(None),
                    o => Err(classify_exception(Incident::Plan(&o)).expect("exceptional")),
                }
            }
            Frame::Clear {
                receptacle,
                occupant,
            } => {
                let dest = self
                    .free_receptacle(occupant, &[receptacle])
                    .ok_or(ExceptionKind::NoPlanFound)?;
                Ok(Some(vec![
                    MidAction::GoTo(occupant.clone()),
                    MidAction::PickUp(occupant.clone()),
                    MidAction::GoTo(dest.clone()),
                    MidAction::Place(occupant.clone(), dest),
                ]))
            }
            Frame::PutDown => {
                let held = self.held().ok_or(ExceptionKind::NoPlanFound)?;
                let dest = self
                    .free_receptacle(&held, &[])
                    .ok_or(ExceptionKind::NoPlanFound)?;
                Ok(Some(vec![
                    MidAction::GoTo(dest.clone()),
                    MidAction::Place(held, dest),
                ]))
            }
        }
    }

    fn execute_plan(&mut self, plan: &[MidAction], frame: &Frame, replans: u32) -> Flow<()> {
        for (i, a) in plan.iter().enumerate() {
            self.plan_remaining = plan.len() - i;
            match a {
                MidAction::GoTo(x) => {
                    if is_dummy(x) && self.world.table.get(x).is_none() {
                        return Err(Fault::Exception(ExceptionKind::TargetUnreachable));
                    }
                    self.navigate(NavTarget::Instance(x.clone(), APPROACH_RADIUS))?;
                }
                MidAction::Search(x) => {
                    let cat = split_id(x).0.to_string();
                    self.search(&cat)?;
                    return Err(Fault::Found);
                }
                MidAction::Other { name, .. } => {
                    return Err(Fault::Exception(ExceptionKind::SimulatorRejection(
                        format!("unknown action {name}"),
                    )))
                }
                m => {
                    self.manipulate(m, replans)?;
                    if self.frame_done(frame) {
                        return Ok(());
                    }
                }
            }
        }
        self.plan_remaining = 0;
        Ok(())
    }

    /// Pursues one subgoal with a stack of recovery frames. Returns the
    /// exception that ended it when abandoned.
    fn pursue(
        &mut self,
        subgoal: &Subgoal,
        occurrence: usize,
    ) -> Result<(), Option<ExceptionKind>> {
        let mut stack = vec![Frame::Original {
            subgoal: subgoal.clone(),
            occurrence,
        }];
        let mut replans = 0;
        let mut search_replans = 0;
        let mut unpruned = false;
        let mut last: Option<ExceptionKind> = None;
        loop {
            while stack.last().is_some_and(|f| self.frame_done(f)) {
                stack.pop();
            }
            let Some(frame) = stack.last().cloned() else {
                return Ok(());
            };
            if replans >= self.cfg.budget.replans {
                return Err(last);
            }
            self.active = Some(frame.label());
            self.plan_remaining = 0;
            if let Err(f) = self.check_budget() {
                return Err(match f {
                    Fault::SubgoalBudget | Fault::EpisodeBudget => last,
                    _ => None,
                });
            }
            let prune = self.cfg.pruning && !unpruned;
            let plan = match self.plan_frame(&frame, prune) {
                Ok(Some(p)) => p,
                Ok(None) => {
                    // the planner thinks the goal holds while the monitor does not
                    replans += 1;
                    continue;
                }
                Err(kind) => {
                    let mut ctx = self.ctx(replans);
                    ctx.pruned = prune && matches!(frame, Frame::Original { .. });
                    let d = recover(&kind, &ctx);
                    self.note(&kind, &d);
                    last = Some(kind);
                    match d {
                        RecoveryDecision::RetryUnpruned => {
                            unpruned = true;
                            continue;
                        }
                        RecoveryDecision::Abandon => return Err(last),
                        _ => {
                            replans += 1;
                            continue;
                        }
                    }
                }
            };
            match self.execute_plan(&plan, &frame, replans) {
                Ok(()) => {
                    if !self.frame_done(&frame) {
                        if !self.cfg.replanning {
                            return Err(last);
                        }
                        replans += 1;
                    }
                }
                Err(Fault::Found) => {
                    search_replans += 1;
                    if search_replans > MAX_SEARCH_REPLANS {
                        replans += 1;
                    }
                }
                Err(Fault::EpisodeBudget) | Err(Fault::SubgoalBudget) => return Err(last),
                Err(Fault::Exception(kind)) => {
                    let mut ctx = self.ctx(replans);
                    // inner handlers already spent their retry and re-grounding
                    ctx.retried = true;
                    ctx.regrounded = true;
                    if kind == ExceptionKind::ReceptacleFull {
                        ctx.occupant = self.occupant(&plan);
                    }
                    let d = recover(&kind, &ctx);
                    self.note(&kind, &d);
                    last = Some(kind);
                    replans += 1;
                    match d {
                        RecoveryDecision::Abandon => return Err(last),
                        RecoveryDecision::ClearReceptacle {
                            receptacle,
                            occupant,
                        } => {
                            stack.push(Frame::Clear {
                                receptacle,
                                occupant,
                            });
                            if self.held().is_some() {
                                stack.push(Frame::PutDown);
                            }
                        }
                        RecoveryDecision::PutDown => stack.push(Frame::PutDown),
                        _ => {}
                    }
                }
            }
        }
    }

    /// Occupant of the receptacle of the failed Place in `plan`.
    fn occupant(&self, plan: &[MidAction]) -> Option<(String, String)> {
        let r = plan.iter().find_map(|a| match a {
            MidAction::Place(x, r) if self.world.table.get(x).is_some_and(|i| i.held) => {
                Some(r.clone())
            }
            _ => None,
        })?;
        let eye = self.pose().eye();
        self.world
            .table
            .records
            .iter()
            .filter(|c| c.parent.as_deref() == Some(r.as_str()) && !c.held)
            .min_by(|a, b| {
                euclid(a.centroid(), eye)
                    .total_cmp(&euclid(b.centroid(), eye))
                    .then(a.id.cmp(&b.id))
            })
            .map(|c| (r.clone(), c.id.clone()))
    }

    fn run(mut self, task: &TaskSpec, subgoals: &[Subgoal], reference_length: u32) -> EpisodeRun {
        let chosen: Vec<Subgoal> = if self.cfg.last_subgoal_only {
            subgoals.last().cloned().into_iter().collect()
        } else {
            subgoals.to_vec()
        };
        let first = self.sim.observe();
        self.world.update(&first);
        let mut states: Vec<SubgoalState> = chosen.iter().cloned().map(SubgoalState::new).collect();
        let mut abandoned: Vec<Option<ExceptionKind>> = Vec::new();
        let warmup = |s: &mut Self| -> Flow<()> {
            s.nav_step(Primitive::LookDown)?;
            for _ in 0..4 {
                s.nav_step(Primitive::TurnLeft)?;
            }
            Ok(())
        };
        let mut halted = warmup(&mut self).is_err();
        let mut seen: BTreeMap<Subgoal, usize> = BTreeMap::new();
        for (i, sg) in chosen.iter().enumerate() {
            if halted {
                break;
            }
            let k = seen.entry(sg.clone()).or_default();
            *k += 1;
            let k = *k;
            let now = self.sim.steps();
            states[i]
                .transition(SubgoalStatus::InProgress, now)
                .expect("pending subgoal starts");
            self.sg_steps = 0;
            info!("subgoal {sg} (occurrence {k})");
            let outcome = self.pursue(sg, k);
            let now = self.sim.steps();
            match outcome {
                Ok(()) => states[i].transition(SubgoalStatus::Completed, now),
                Err(e) => {
                    info!("abandoned {sg}: {e:?}");
                    abandoned.push(e);
                    states[i].transition(SubgoalStatus::Abandoned, now)
                }
            }
            .expect("in-progress subgoal resolves");
            let b = &self.cfg.budget;
            halted = self.sim.steps() >= b.max_steps || self.sim.failures() >= b.max_failures;
        }
        self.active = None;
        self.plan_remaining = 0;
        let (r, _) = self.sim.step(Action::Stop);
        self.actions.push(Action::Stop);
        self.trace.push(TraceRecord {
            step: self.sim.steps(),
            pose: self.pose(),
            action: Some(Action::Stop.to_string()),
            result: Some(r.reason.map_or_else(|| "ok".to_string(), |x| x.to_string())),
            exception: None,
            recovery: None,
            active_subgoal: None,
            plan_remaining: 0,
            belief_digest: digest(&self.world),
            metrics: None,
        });

        let goals = check_goal_conditions(task, &self.sim.truth(), &self.planner.affordances)
            .unwrap_or_default();
        let report = MetricsReport::new(goals, self.sim.steps(), reference_length.max(1));
        let failure = if report.success {
            None
        } else if chosen.is_empty() || states.iter().all(|s| s.status == SubgoalStatus::Completed) {
            Some(FailureCategory::SubgoalPrediction)
        } else {
            Some(
                abandoned
                    .iter()
                    .map(|e| {
                        e.as_ref()
                            .map_or(FailureCategory::Other, ExceptionKind::category)
                    })
                    .min()
                    .unwrap_or(FailureCategory::Other),
            )
        };
        let summary = EpisodeSummary {
            report,
            failure,
            steps: self.sim.steps(),
            failed_actions: self.sim.failures(),
            subgoals: states,
            exceptions: self.exceptions.clone(),
            recoveries: self.recoveries.clone(),
            plans: self.plan_stats.len() as u32,
            plan_expansions: self.plan_stats.iter().map(|p| p.expansions).sum(),
        };
        self.trace.push(TraceRecord {
            step: self.sim.steps(),
            pose: self.pose(),
            action: None,
            result: None,
            exception: None,
            recovery: None,
            active_subgoal: None,
            plan_remaining: 0,
            belief_digest: digest(&self.world),
            metrics: Some(summary.clone()),
        });
        EpisodeRun {
            trace: self.trace,
            summary,
            plan_stats: self.plan_stats,
            actions: self.actions,
        }
    }
}

/// Runs one episode: the subgoals in order with planning, execution,
/// monitoring and recovery. `reference_length` is the oracle step count used
/// for path-length weighting.
pub fn run_episode(
    scene: &SceneSpec,
    task: &TaskSpec,
    subgoals: &[Subgoal],
    planner: &Planner,
    cfg: &ExecConfig,
    reference_length: u32,
) -> Result<EpisodeRun, ExecError> {
    let agent = Agent::new(scene, planner, cfg)?;
    Ok(agent.run(task, subgoals, reference_length))
}
