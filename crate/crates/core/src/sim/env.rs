use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::affordance::AffordanceTable;
use crate::geom::{
    traverse, voxel_center, Camera, Cell, Pose, Voxel, LAYERS, PITCH_LIMIT, PITCH_STEP, VOXEL,
};
use crate::planner::{Belief, BeliefInstance, DYNAMIC_STATES, INTERACT_DIST};

use super::scene::{InstanceSpec, SceneSpec};
use super::SimError;

/// Lowest and highest voxel layers that obstruct walking.
pub const BAND: (i32, i32) = (1, 6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Primitive {
    Forward,
    TurnLeft,
    TurnRight,
    LookUp,
    LookDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Manipulation {
    PickUp,
    Place,
    Slice,
    ToggleOn,
    ToggleOff,
    Open,
    Close,
    Pour,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Nav(Primitive),
    Interact {
        kind: Manipulation,
        pixel: (usize, usize),
    },
    Stop,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Nav(p) => write!(f, "{p:?}"),
            Action::Interact { kind, pixel } => write!(f, "{kind:?}@{},{}", pixel.0, pixel.1),
            Action::Stop => f.write_str("Stop"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    Blocked,
    HandOccupied,
    ReceptacleFull,
    NotNear,
    NotVisible,
    WrongAffordance,
    NothingAtPixel,
    EpisodeOver,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureReason::Blocked => "blocked",
            FailureReason::HandOccupied => "hand-occupied",
            FailureReason::ReceptacleFull => "receptacle-full",
            FailureReason::NotNear => "not-near",
            FailureReason::NotVisible => "not-visible",
            FailureReason::WrongAffordance => "wrong-affordance",
            FailureReason::NothingAtPixel => "nothing-at-pixel",
            FailureReason::EpisodeOver => "episode-over",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionResult {
    pub success: bool,
    pub reason: Option<FailureReason>,
}

impl ActionResult {
    fn ok() -> Self {
        ActionResult {
            success: true,
            reason: None,
        }
    }

    fn fail(r: FailureReason) -> Self {
        ActionResult {
            success: false,
            reason: Some(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: String,
    /// Perceived physical states, possibly noisy.
    pub labels: BTreeMap<String, bool>,
}

/// Egocentric frame. Segmentation keys are per-frame (0 = no instance) and
/// carry no identity across frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: Pose,
    pub width: usize,
    pub height: usize,
    /// Row-major depth in meters along the view axis; 0 where nothing is hit.
    pub depth: Vec<f32>,
    pub seg: Vec<u32>,
    pub detections: BTreeMap<u32, Detection>,
    /// Category of the held object, if any.
    pub holding: Option<String>,
}

impl Observation {
    pub fn key_at(&self, u: usize, v: usize) -> u32 {
        self.seg[v * self.width + u]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub p_action_fail: f64,
    pub p_detection_drop: f64,
    pub p_state_flip: f64,
    pub depth_sigma: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        for p in [self.p_action_fail, self.p_detection_drop, self.p_state_flip] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Spec(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.depth_sigma < 0.0 {
            return Err(SimError::Spec("negative depth sigma".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        *self == NoiseConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SimInstance {
    id: String,
    category: String,
    origin: Voxel,
    size: [i32; 3],
    states: BTreeMap<String, bool>,
    parent: Option<String>,
    capacity: Option<u32>,
    alive: bool,
    held: bool,
    sliced_from: Option<String>,
}

const EMPTY: u32 = 0;
const WALL: u32 = 1;

/// Deterministic household environment.
#[derive(Debug, Clone)]
pub struct Sim {
    dims: [i32; 3],
    walls: BTreeSet<Cell>,
    insts: Vec<SimInstance>,
    index: BTreeMap<String, usize>,
    pose: Pose,
    aff: AffordanceTable,
    camera: Camera,
    noise: NoiseConfig,
    rng: ChaCha8Rng,
    grid: Vec<u32>,
    next_ordinal: BTreeMap<String, u32>,
    steps: u32,
    failures: u32,
    stopped: bool,
}

impl Sim {
    pub fn new(scene: &SceneSpec, noise: NoiseConfig, seed: u64) -> Result<Self, SimError> {
        Sim::with_tables(
            scene,
            noise,
            seed,
            AffordanceTable::household(),
            Camera::default(),
        )
    }

    pub fn with_tables(
        scene: &SceneSpec,
        noise: NoiseConfig,
        seed: u64,
        aff: AffordanceTable,
        camera: Camera,
    ) -> Result<Self, SimError> {
        noise.validate()?;
        let dims = [scene.dims[0], scene.dims[1], LAYERS];
        let mut sim = Sim {
            dims,
            walls: scene.walls.iter().copied().collect(),
            insts: Vec::new(),
            index: BTreeMap::new(),
            pose: scene.agent,
            aff,
            camera,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            grid: vec![EMPTY; (dims[0] * dims[1] * dims[2]) as usize],
            next_ordinal: BTreeMap::new(),
            steps: 0,
            failures: 0,
            stopped: false,
        };
        for spec in &scene.instances {
            sim.add(spec)?;
        }
        for i in &sim.insts {
            if let Some(p) = &i.parent {
                if !sim.index.contains_key(p) {
                    return Err(SimError::Spec(format!("{} has unknown parent {p}", i.id)));
                }
            }
        }
        sim.rebuild()?;
        if !sim.walkable(sim.pose.cell) {
            return Err(SimError::Spec(format!(
                "agent starts in blocked cell {:?}",
                sim.pose.cell
            )));
        }
        Ok(sim)
    }

    fn add(&mut self, s: &InstanceSpec) -> Result<(), SimError> {
        if self.index.contains_key(&s.id) {
            return Err(SimError::Spec(format!("duplicate instance {}", s.id)));
        }
        if s.size.iter().any(|&d| d <= 0) {
            return Err(SimError::Spec(format!("{} has empty size", s.id)));
        }
        for v in s.voxels() {
            if !self.in_bounds(v) {
                return Err(SimError::Spec(format!("{} leaves the map at {v:?}", s.id)));
            }
        }
        if let (_, Some(ord)) = crate::planner::split_id(&s.id) {
            let n = self.next_ordinal.entry(s.category.clone()).or_default();
            *n = (*n).max(ord + 1);
        }
        self.index.insert(s.id.clone(), self.insts.len());
        self.insts.push(SimInstance {
            id: s.id.clone(),
            category: s.category.clone(),
            origin: s.origin,
            size: s.size,
            states: s.states.clone(),
            parent: s.parent.clone(),
            capacity: s.capacity,
            alive: true,
            held: false,
            sliced_from: None,
        });
        Ok(())
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn failures(&self) -> u32 {
        self.failures
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    pub fn camera(&self) -> Camera {
        self.camera
    }

    pub fn affordances(&self) -> &AffordanceTable {
        &self.aff
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn held(&self) -> Option<&str> {
        self.insts.iter().find(|i| i.held).map(|i| i.id.as_str())
    }

    fn in_bounds(&self, v: Voxel) -> bool {
        (0..3).all(|a| v[a] >= 0 && v[a] < self.dims[a])
    }

    fn gi(&self, v: Voxel) -> usize {
        ((v[2] * self.dims[1] + v[1]) * self.dims[0] + v[0]) as usize
    }

    fn at(&self, v: Voxel) -> u32 {
        if self.in_bounds(v) {
            self.grid[self.gi(v)]
        } else {
            EMPTY
        }
    }

    /// Instance id rendered at a voxel, if any.
    pub fn instance_at(&self, v: Voxel) -> Option<&str> {
        match self.at(v) {
            k if k >= 2 => Some(self.insts[(k - 2) as usize].id.as_str()),
            _ => None,
        }
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls.contains(&c)
    }

    fn openable(&self, i: &SimInstance) -> bool {
        self.aff.get(&i.category).openable
    }

    fn is_open(i: &SimInstance) -> bool {
        i.states.get("isOpen").copied().unwrap_or(false)
    }

    fn interior(i: &SimInstance) -> impl Iterator<Item = Voxel> + '_ {
        let [ox, oy, oz] = i.origin;
        let [sx, sy, sz] = i.size;
        (oz + 1..oz + sz - 1).flat_map(move |z| {
            (oy..oy + sy).flat_map(move |y| (ox..ox + sx).map(move |x| [x, y, z]))
        })
    }

    fn box_voxels(i: &SimInstance) -> impl Iterator<Item = Voxel> + '_ {
        let [ox, oy, oz] = i.origin;
        let [sx, sy, sz] = i.size;
        (oz..oz + sz).flat_map(move |z| {
            (oy..oy + sy).flat_map(move |y| (ox..ox + sx).map(move |x| [x, y, z]))
        })
    }

    /// Whether an ancestor container is closed.
    fn hidden(&self, i: &SimInstance) -> bool {
        let mut cur = i.parent.as_deref();
        let mut hops = 0;
        while let Some(p) = cur {
            let pi = &self.insts[self.index[p]];
            if self.openable(pi) && !Sim::is_open(pi) {
                return true;
            }
            cur = pi.parent.as_deref();
            hops += 1;
            if hops > self.insts.len() {
                break;
            }
        }
        false
    }

    fn rebuild(&mut self) -> Result<(), SimError> {
        self.grid.iter_mut().for_each(|g| *g = EMPTY);
        for &(x, y) in &self.walls.clone() {
            for z in 0..self.dims[2] {
                let v = [x, y, z];
                if self.in_bounds(v) {
                    let k = self.gi(v);
                    self.grid[k] = WALL;
                }
            }
        }
        for (k, i) in self.insts.iter().enumerate() {
            if !i.alive || i.held || self.hidden(i) {
                continue;
            }
            let shell = self.openable(i) && Sim::is_open(i);
            let interior: BTreeSet<Voxel> = if shell {
                Sim::interior(i).collect()
            } else {
                BTreeSet::new()
            };
            for v in Sim::box_voxels(i) {
                if interior.contains(&v) {
                    continue;
                }
                let gi = self.gi(v);
                if self.grid[gi] != EMPTY && !self.is_container_cover(self.grid[gi], i) {
                    return Err(SimError::Spec(format!(
                        "{} overlaps another object at {v:?}",
                        i.id
                    )));
                }
                // a closed container covers its interior contents
                if self.grid[gi] == EMPTY {
                    self.grid[gi] = k as u32 + 2;
                }
            }
        }
        Ok(())
    }

    /// True when `cell` already holds a closed container that encloses `i`.
    fn is_container_cover(&self, cell: u32, i: &SimInstance) -> bool {
        cell >= 2 && {
            let c = &self.insts[(cell - 2) as usize];
            self.openable(c) && !Sim::is_open(c) && i.parent.as_deref() == Some(c.id.as_str())
        }
    }

    /// A cell the agent can stand in.
    pub fn walkable(&self, c: Cell) -> bool {
        if c.0 < 0
            || c.1 < 0
            || c.0 >= self.dims[0]
            || c.1 >= self.dims[1]
            || self.walls.contains(&c)
        {
            return false;
        }
        (BAND.0..=BAND.1).all(|z| self.at([c.0, c.1, z]) == EMPTY)
    }

    fn centroid(&self, i: &SimInstance) -> [f64; 3] {
        if i.held {
            return self.pose.eye();
        }
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = (i.origin[a] as f64 + i.size[a] as f64 / 2.0) * VOXEL;
        }
        c
    }

    fn reach(&self, i: &SimInstance) -> f64 {
        let c = self.centroid(i);
        let e = self.pose.eye();
        ((c[0] - e[0]).powi(2) + (c[1] - e[1]).powi(2)).sqrt()
    }

    fn capacity(&self, i: &SimInstance) -> u32 {
        let a = self.aff.get(&i.category);
        let base = i.capacity.or(a.receptacle).unwrap_or(0);
        if a.surface {
            i.capacity.unwrap_or((i.size[0] * i.size[1]) as u32)
        } else if a.openable {
            base.min(Sim::interior(i).count() as u32)
        } else {
            base
        }
    }

    /// Candidate voxels for contents, in fill order.
    fn slots(&self, i: &SimInstance) -> Vec<Voxel> {
        if self.openable(i) {
            let mut v: Vec<Voxel> = Sim::interior(i).collect();
            v.sort_by_key(|v| (v[2], v[1], v[0]));
            return v;
        }
        let a = self.aff.get(&i.category);
        let levels = if a.surface {
            1
        } else {
            self.capacity(i) as i32
        };
        let top = i.origin[2] + i.size[2];
        let mut out = Vec::new();
        for l in 0..levels {
            for y in i.origin[1]..i.origin[1] + i.size[1] {
                for x in i.origin[0]..i.origin[0] + i.size[0] {
                    let v = [x, y, top + l];
                    if self.in_bounds(v) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    fn occupied_by_any(&self, v: Voxel) -> bool {
        if self.at(v) != EMPTY {
            return true;
        }
        // contents hidden inside closed containers still take up their slot
        self.insts
            .iter()
            .any(|i| i.alive && !i.held && i.origin == v && i.size == [1, 1, 1])
    }

    fn children(&self, id: &str) -> usize {
        self.insts
            .iter()
            .filter(|i| i.alive && !i.held && i.parent.as_deref() == Some(id))
            .count()
    }

    /// Renders the current view with the configured perception noise.
    pub fn observe(&mut self) -> Observation {
        let (w, h) = (self.camera.width, self.camera.height);
        let eye = self.pose.eye();
        let mut depth = vec![0f32; w * h];
        let mut raw = vec![u32::MAX; w * h];
        for v in 0..h {
            for u in 0..w {
                let dir = self.camera.pixel_ray(&self.pose, u, v);
                let mut hit: Option<(f64, u32)> = None;
                traverse(eye, dir, 100.0, self.dims, |vox, t| {
                    if vox[2] < 0 {
                        hit = Some((t, EMPTY));
                        return true;
                    }
                    let g = self.at(vox);
                    if g != EMPTY {
                        hit = Some((t, g));
                        return true;
                    }
                    false
                });
                if let Some((t, g)) = hit {
                    depth[v * w + u] = t as f32;
                    if g >= 2 {
                        raw[v * w + u] = g - 2;
                    }
                }
            }
        }
        // per-frame keys in raster order of first appearance
        let mut keys: BTreeMap<u32, u32> = BTreeMap::new();
        let mut order = Vec::new();
        for &r in &raw {
            if r != u32::MAX && !keys.contains_key(&r) {
                keys.insert(r, keys.len() as u32 + 1);
                order.push(r);
            }
        }
        let mut detections = BTreeMap::new();
        let mut dropped = BTreeSet::new();
        for &r in &order {
            let key = keys[&r];
            if self.noise.p_detection_drop > 0.0 && self.rng.gen_bool(self.noise.p_detection_drop) {
                dropped.insert(key);
                continue;
            }
            let inst = &self.insts[r as usize];
            let mut labels = BTreeMap::new();
            for s in DYNAMIC_STATES {
                if let Some(&b) = inst.states.get(s) {
                    let flip =
                        self.noise.p_state_flip > 0.0 && self.rng.gen_bool(self.noise.p_state_flip);
                    labels.insert(s.to_string(), b ^ flip);
                }
            }
            detections.insert(
                key,
                Detection {
                    category: inst.category.clone(),
                    labels,
                },
            );
        }
        let seg: Vec<u32> = raw
            .iter()
            .map(|r| match keys.get(r) {
                Some(k) if !dropped.contains(k) => *k,
                _ => 0,
            })
            .collect();
        if self.noise.depth_sigma > 0.0 {
            let n = Normal::new(0.0, self.noise.depth_sigma).expect("valid sigma");
            for d in depth.iter_mut().filter(|d| **d > 0.0) {
                *d = (*d as f64 + n.sample(&mut self.rng)).max(0.01) as f32;
            }
        }
        Observation {
            pose: self.pose,
            width: w,
            height: h,
            depth,
            seg,
            detections,
            holding: self
                .held()
                .map(|id| self.insts[self.index[id]].category.clone()),
        }
    }

    /// Instance rendered at a pixel of the noiseless current view.
    pub fn pick_pixel(&self, pixel: (usize, usize)) -> Option<usize> {
        self.pick_pixel_at(&self.pose, pixel)
    }

    /// Pixels showing `id` in the noiseless view from `pose`, raster order.
    pub fn pixels_of_at(&self, pose: &Pose, id: &str) -> Vec<(usize, usize)> {
        let Some(&k) = self.index.get(id) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for v in 0..self.camera.height {
            for u in 0..self.camera.width {
                if self.pick_pixel_at(pose, (u, v)) == Some(k) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn pixels_of(&self, id: &str) -> Vec<(usize, usize)> {
        self.pixels_of_at(&self.pose, id)
    }

    fn pick_pixel_at(&self, pose: &Pose, pixel: (usize, usize)) -> Option<usize> {
        let dir = self.camera.pixel_ray(pose, pixel.0, pixel.1);
        let mut hit = None;
        traverse(pose.eye(), dir, 100.0, self.dims, |vox, _| {
            if vox[2] < 0 {
                return true;
            }
            match self.at(vox) {
                EMPTY => false,
                WALL => true,
                g => {
                    hit = Some((g - 2) as usize);
                    true
                }
            }
        });
        hit
    }

    /// Executes one action and returns the result with the next observation.
    pub fn step(&mut self, action: Action) -> (ActionResult, Observation) {
        let r = self.apply(action);
        if !r.success {
            self.failures += 1;
        }
        let obs = self.observe();
        (r, obs)
    }

    fn apply(&mut self, action: Action) -> ActionResult {
        if self.stopped {
            return ActionResult::fail(FailureReason::EpisodeOver);
        }
        if action != Action::Stop {
            self.steps += 1;
        }
        let r = match action {
            Action::Stop => {
                self.stopped = true;
                ActionResult::ok()
            }
            Action::Nav(p) => self.navigate(p),
            Action::Interact { kind, pixel } => {
                let noop =
                    self.noise.p_action_fail > 0.0 && self.rng.gen_bool(self.noise.p_action_fail);
                if noop {
                    ActionResult::ok()
                } else {
                    self.interact(kind, pixel)
                }
            }
        };
        self.appliance_rules();
        r
    }

    fn navigate(&mut self, p: Primitive) -> ActionResult {
        match p {
            Primitive::Forward => {
                let d = self.pose.heading.delta();
                let next = (self.pose.cell.0 + d.0, self.pose.cell.1 + d.1);
                if !self.walkable(next) {
                    return ActionResult::fail(FailureReason::Blocked);
                }
                self.pose.cell = next;
            }
            Primitive::TurnLeft => self.pose.heading = self.pose.heading.left(),
            Primitive::TurnRight => self.pose.heading = self.pose.heading.right(),
            Primitive::LookUp | Primitive::LookDown => {
                let delta = if p == Primitive::LookUp {
                    PITCH_STEP
                } else {
                    -PITCH_STEP
                };
                let next = self.pose.pitch + delta;
                if next.abs() > PITCH_LIMIT {
                    return ActionResult::fail(FailureReason::Blocked);
                }
                self.pose.pitch = next;
            }
        }
        ActionResult::ok()
    }

    fn interact(&mut self, kind: Manipulation, pixel: (usize, usize)) -> ActionResult {
        use FailureReason::*;
        if pixel.0 >= self.camera.width || pixel.1 >= self.camera.height {
            return ActionResult::fail(NotVisible);
        }
        let Some(t) = self.pick_pixel(pixel) else {
            return ActionResult::fail(NothingAtPixel);
        };
        if self.reach(&self.insts[t]) > INTERACT_DIST {
            return ActionResult::fail(NotNear);
        }
        let held = self.insts.iter().position(|i| i.held);
        let ta = self.aff.get(&self.insts[t].category).clone();
        let flag = |i: &SimInstance, s: &str| i.states.get(s).copied().unwrap_or(false);
        match kind {
            Manipulation::PickUp => {
                if held.is_some() {
                    return ActionResult::fail(HandOccupied);
                }
                if !ta.pickupable || self.children(&self.insts[t].id) > 0 {
                    return ActionResult::fail(WrongAffordance);
                }
                let i = &mut self.insts[t];
                i.held = true;
                i.parent = None;
            }
            Manipulation::Place => {
                let Some(h) = held else {
                    return ActionResult::fail(WrongAffordance);
                };
                let r = &self.insts[t];
                if ta.receptacle.is_none() || (ta.openable && !Sim::is_open(r)) {
                    return ActionResult::fail(WrongAffordance);
                }
                if self.children(&r.id) as u32 >= self.capacity(r) {
                    return ActionResult::fail(ReceptacleFull);
                }
                let Some(slot) = self
                    .slots(r)
                    .into_iter()
                    .find(|v| !self.occupied_by_any(*v))
                else {
                    return ActionResult::fail(ReceptacleFull);
                };
                let rid = r.id.clone();
                let i = &mut self.insts[h];
                i.held = false;
                i.origin = slot;
                i.size = [1, 1, 1];
                i.parent = Some(rid);
            }
            Manipulation::Slice => {
                let knife = held.is_some_and(|h| self.aff.get(&self.insts[h].category).slicer);
                let Some((yield_cat, n)) = ta.sliceable.clone() else {
                    return ActionResult::fail(WrongAffordance);
                };
                if !knife {
                    return ActionResult::fail(WrongAffordance);
                }
                self.slice(t, &yield_cat, n);
            }
            Manipulation::ToggleOn | Manipulation::ToggleOff => {
                let on = kind == Manipulation::ToggleOn;
                if !ta.toggleable || flag(&self.insts[t], "isToggled") == on {
                    return ActionResult::fail(WrongAffordance);
                }
                self.insts[t].states.insert("isToggled".into(), on);
            }
            Manipulation::Open | Manipulation::Close => {
                let open = kind == Manipulation::Open;
                if !ta.openable || Sim::is_open(&self.insts[t]) == open {
                    return ActionResult::fail(WrongAffordance);
                }
                self.insts[t].states.insert("isOpen".into(), open);
            }
            Manipulation::Pour => {
                let Some(h) = held else {
                    return ActionResult::fail(WrongAffordance);
                };
                if !ta.liquid_target || !flag(&self.insts[h], "isFilledWithLiquid") || h == t {
                    return ActionResult::fail(WrongAffordance);
                }
                let hs = &mut self.insts[h].states;
                hs.insert("isFilledWithLiquid".into(), false);
                if hs.contains_key("simbotIsFilledWithCoffee") {
                    hs.insert("simbotIsFilledWithCoffee".into(), false);
                }
                if ta.fillable {
                    self.insts[t]
                        .states
                        .insert("isFilledWithLiquid".into(), true);
                }
            }
        }
        self.rebuild().expect("actions keep the scene consistent");
        ActionResult::ok()
    }

    /// Retires the sliced instance and spawns its yield above it.
    fn slice(&mut self, t: usize, yield_cat: &str, n: u32) {
        let parent = self.insts[t].parent.clone();
        let base = self.insts[t].origin;
        let pid = self.insts[t].id.clone();
        self.insts[t].alive = false;
        self.rebuild().expect("removal keeps the scene consistent");
        let mut spots = Vec::new();
        let mut z = base[2];
        while spots.len() < n as usize && z < self.dims[2] {
            let v = [base[0], base[1], z];
            if !self.occupied_by_any(v) {
                spots.push(v);
            }
            z += 1;
        }
        if spots.len() < n as usize {
            if let Some(p) = parent.as_deref().map(|p| self.index[p]) {
                for v in self.slots(&self.insts[p]) {
                    if spots.len() >= n as usize {
                        break;
                    }
                    if !spots.contains(&v) && !self.occupied_by_any(v) {
                        spots.push(v);
                    }
                }
            }
        }
        for v in spots {
            let ord = self.next_ordinal.entry(yield_cat.to_string()).or_default();
            let id = format!("{yield_cat}_{ord}");
            *ord += 1;
            let mut states = BTreeMap::new();
            states.insert("isSliced".to_string(), true);
            if self.aff.get(yield_cat).cookable {
                states.insert("isCooked".to_string(), false);
            }
            self.index.insert(id.clone(), self.insts.len());
            self.insts.push(SimInstance {
                id,
                category: yield_cat.to_string(),
                origin: v,
                size: [1, 1, 1],
                states,
                parent: parent.clone(),
                capacity: None,
                alive: true,
                held: false,
                sliced_from: Some(pid.clone()),
            });
        }
    }

    /// Continuous appliance effects for toggled devices.
    fn appliance_rules(&mut self) {
        let on = |i: &SimInstance| i.alive && i.states.get("isToggled").copied().unwrap_or(false);
        let mut set: Vec<(usize, &'static str)> = Vec::new();
        let faucet_on = self
            .insts
            .iter()
            .any(|i| on(i) && self.aff.get(&i.category).faucet);
        for (k, i) in self.insts.iter().enumerate() {
            if !i.alive || i.held {
                continue;
            }
            let Some(p) = i.parent.as_deref().map(|p| &self.insts[self.index[p]]) else {
                continue;
            };
            let (ia, pa) = (self.aff.get(&i.category), self.aff.get(&p.category));
            if pa.heater && on(p) && ia.cookable {
                set.push((k, "isCooked"));
            }
            if pa.coffee_machine && on(p) && ia.fillable {
                set.push((k, "simbotIsFilledWithCoffee"));
                set.push((k, "isFilledWithLiquid"));
            }
            if pa.sink && faucet_on {
                set.push((k, "isClean"));
                if ia.fillable {
                    set.push((k, "isFilledWithLiquid"));
                }
            }
            if pa.cookware && ia.cookable {
                let burner = p
                    .parent
                    .as_deref()
                    .map(|b| &self.insts[self.index[b]])
                    .is_some_and(|b| self.aff.get(&b.category).stove_burner && on(b));
                if burner {
                    set.push((k, "isCooked"));
                }
            }
        }
        for (k, s) in set {
            self.insts[k].states.insert(s.to_string(), true);
        }
    }

    /// Full ground-truth snapshot in the planner's belief format.
    pub fn truth(&self) -> Belief {
        let instances = self
            .insts
            .iter()
            .filter(|i| i.alive)
            .map(|i| {
                let mut b = BeliefInstance::new(&i.id, &i.category, self.centroid(i));
                b.states = i.states.clone();
                b.parent = i.parent.clone();
                b.held = i.held;
                b.sliced_from = i.sliced_from.clone();
                b.capacity = self
                    .aff
                    .get(&i.category)
                    .receptacle
                    .map(|_| self.capacity(i));
                b
            })
            .collect();
        Belief {
            agent: self.pose.eye(),
            instances,
        }
    }

    /// Voxels currently owned by each visible (rendered) instance.
    pub fn rendered_voxels(&self) -> BTreeMap<String, Vec<Voxel>> {
        let mut out: BTreeMap<String, Vec<Voxel>> = BTreeMap::new();
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    if let Some(id) = self.instance_at([x, y, z]) {
                        out.entry(id.to_string()).or_default().push([x, y, z]);
                    }
                }
            }
        }
        out
    }

    /// Nearest-hit oracle for one pixel using box intersection over all
    /// rendered voxels; used to cross-check the raycaster.
    pub fn oracle_pixel(&self, pixel: (usize, usize)) -> Option<(String, f64)> {
        let o = self.pose.eye();
        let d = self.camera.pixel_ray(&self.pose, pixel.0, pixel.1);
        let mut best: Option<(String, f64)> = None;
        let mut wall_t = f64::INFINITY;
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    let g = self.at([x, y, z]);
                    if g == EMPTY {
                        continue;
                    }
                    let Some(t) = slab(o, d, [x, y, z]) else {
                        continue;
                    };
                    if g == WALL {
                        wall_t = wall_t.min(t);
                    } else if best.as_ref().is_none_or(|b| t < b.1) {
                        best = Some((self.insts[(g - 2) as usize].id.clone(), t));
                    }
                }
            }
        }
        // floor plane
        let floor_t = if d[2] < 0.0 {
            -o[2] / d[2]
        } else {
            f64::INFINITY
        };
        best.filter(|b| b.1 < wall_t && b.1 < floor_t)
    }

    /// Center of the instance's box, for tests and scripted controllers.
    pub fn instance_center(&self, id: &str) -> Option<[f64; 3]> {
        self.index.get(id).map(|&k| self.centroid(&self.insts[k]))
    }

    pub fn instance_voxel(&self, id: &str) -> Option<Voxel> {
        self.index.get(id).map(|&k| self.insts[k].origin)
    }

    pub fn voxel_center_of(v: Voxel) -> [f64; 3] {
        voxel_center(v)
    }
}

fn slab(o: [f64; 3], d: [f64; 3], v: Voxel) -> Option<f64> {
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for a in 0..3 {
        let (b0, b1) = (v[a] as f64 * VOXEL, (v[a] + 1) as f64 * VOXEL);
        if d[a].abs() < 1e-12 {
            if o[a] < b0 || o[a] >= b1 {
                return None;
            }
        } else {
            let (t0, t1) = ((b0 - o[a]) / d[a], (b1 - o[a]) / d[a]);
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
    }
    (lo <= hi).then_some(lo)
}
