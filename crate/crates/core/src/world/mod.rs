//! Agent-side representation: voxel map, instance table and physical states.

mod map;
mod table;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::affordance::AffordanceTable;
use crate::geom::{Camera, Pose};
use crate::planner::{ordinal, Belief, BeliefInstance, MidAction};
use crate::sim::{Observation, BAND};

pub use map::{
    mean_center, project_observation, DetectionVoxels, Occupancy, Projection, VoxelMap,
    DEPTH_TOLERANCE,
};
pub use table::{assign, InstanceRecord, InstanceTable, StateEntry, EXACT_ASSIGNMENT_MAX};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("action {0} has no modeled effect")]
    UnknownAction(String),
    #[error("unknown instance {0}")]
    UnknownInstance(String),
}

/// Pixel rectangle (x1, y1, x2, y2), origin top-left, y downward.
pub type PixelBox = (f64, f64, f64, f64);

/// Whether A rests on B judged from image boxes plus the affordance gate.
pub fn predict_on_relation(
    a: PixelBox,
    b: PixelBox,
    cat_a: &str,
    cat_b: &str,
    aff: &AffordanceTable,
) -> bool {
    let cx = (a.0 + a.2) / 2.0;
    let cy = (a.1 + a.3) / 2.0;
    aff.can_rest_on(cat_a, cat_b) && b.0 <= cx && cx <= b.2 && a.3 >= b.1 && cy <= b.3
}

/// The `k` instances farthest from the pose, descending, ties by ordinal.
pub fn farthest_instances<'a>(
    table: &'a InstanceTable,
    pose: &Pose,
    k: usize,
) -> Vec<&'a InstanceRecord> {
    let eye = pose.eye();
    let mut v: Vec<&InstanceRecord> = table.records.iter().collect();
    v.sort_by(|a, b| {
        crate::planner::euclid(b.centroid(), eye)
            .total_cmp(&crate::planner::euclid(a.centroid(), eye))
            .then(ordinal(&a.id).cmp(&ordinal(&b.id)))
            .then(a.id.cmp(&b.id))
    });
    v.truncate(k);
    v
}

/// Voxel map plus instance table, updated once per observation.
#[derive(Debug, Clone)]
pub struct WorldModel {
    pub map: VoxelMap,
    pub table: InstanceTable,
    pub pose: Pose,
    pub camera: Camera,
    aff: AffordanceTable,
    /// Frame key to instance uid for the latest observation.
    frame: BTreeMap<u32, u32>,
    last: Option<Observation>,
    steps: u32,
    visited: std::collections::BTreeSet<(i32, i32)>,
}

impl WorldModel {
    pub fn new(dims: [i32; 3], camera: Camera, aff: AffordanceTable, pose: Pose) -> Self {
        WorldModel {
            map: VoxelMap::new(dims),
            table: InstanceTable::new(),
            pose,
            camera,
            aff,
            frame: BTreeMap::new(),
            last: None,
            steps: 0,
            visited: Default::default(),
        }
    }

    pub fn affordances(&self) -> &AffordanceTable {
        &self.aff
    }

    pub fn visited(&self) -> &std::collections::BTreeSet<(i32, i32)> {
        &self.visited
    }

    pub fn last_observation(&self) -> Option<&Observation> {
        self.last.as_ref()
    }

    /// Projects, integrates and matches one observation.
    pub fn update(&mut self, obs: &Observation) {
        self.steps += 1;
        self.pose = obs.pose;
        self.visited.insert(obs.pose.cell);
        let p = project_observation(obs, &self.camera, self.map.dims());
        self.map.integrate(&p, self.steps);
        self.map.mark_free_column(obs.pose.cell, BAND);
        self.table.release_free(&p.free, &mut self.map);
        self.frame = self.table.match_instances(&p.detections, &mut self.map);
        self.infer_relations();
        self.sync_held(obs);
        self.last = Some(obs.clone());
    }

    /// Keeps the held flag consistent with proprioception.
    fn sync_held(&mut self, obs: &Observation) {
        let eye = self.pose.eye();
        match &obs.holding {
            None => {
                for r in self.table.records.iter_mut().filter(|r| r.held) {
                    r.held = false;
                    r.pending = true;
                }
            }
            Some(cat) => {
                if let Some(r) = self.table.records.iter_mut().find(|r| r.held) {
                    if r.category == *cat {
                        r.hint = eye;
                        return;
                    }
                    r.held = false;
                    r.pending = true;
                }
                let r = self.table.register(cat);
                r.held = true;
                r.hint = eye;
            }
        }
    }

    /// Parent of each observed instance from the voxels beneath it: the first
    /// receptacle it can rest on, passing through non-receptacle owners.
    fn infer_relations(&mut self) {
        let mut parents = Vec::new();
        for r in &self.table.records {
            if r.mask.is_empty() || !self.frame.values().any(|u| *u == r.uid) {
                continue;
            }
            let mut votes: BTreeMap<String, usize> = BTreeMap::new();
            let mut bottom: BTreeMap<(i32, i32), i32> = BTreeMap::new();
            for v in &r.mask {
                let z = bottom.entry((v[0], v[1])).or_insert(v[2]);
                *z = (*z).min(v[2]);
            }
            for ((x, y), z0) in bottom {
                let mut z = z0 - 1;
                while z >= 0 {
                    match self.map.owner([x, y, z]).and_then(|u| self.table.by_uid(u)) {
                        Some(o) if o.uid == r.uid => {}
                        Some(o) if self.aff.get(&o.category).receptacle.is_some() => {
                            if self.aff.can_rest_on(&r.category, &o.category) {
                                *votes.entry(o.id.clone()).or_default() += 1;
                            }
                            break;
                        }
                        _ => {}
                    }
                    z -= 1;
                }
            }
            let best = votes
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(id, _)| id);
            parents.push((r.uid, best));
        }
        for (uid, p) in parents {
            if let Some(r) = self.table.records.iter_mut().find(|r| r.uid == uid) {
                r.parent = p;
            }
        }
    }

    /// Instance id shown under a pixel of the latest frame.
    pub fn instance_at_pixel(&self, u: usize, v: usize) -> Option<&str> {
        let obs = self.last.as_ref()?;
        let key = obs.key_at(u, v);
        self.frame
            .get(&key)
            .and_then(|uid| self.table.by_uid(*uid))
            .map(|r| r.id.as_str())
    }

    /// Pixels of an instance in the latest frame, raster order.
    pub fn pixels_of(&self, id: &str) -> Vec<(usize, usize)> {
        let (Some(obs), Some(r)) = (self.last.as_ref(), self.table.get(id)) else {
            return Vec::new();
        };
        let keys: Vec<u32> = self
            .frame
            .iter()
            .filter(|(_, u)| **u == r.uid)
            .map(|(k, _)| *k)
            .collect();
        let mut out = Vec::new();
        for v in 0..obs.height {
            for u in 0..obs.width {
                if keys.contains(&obs.key_at(u, v)) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Latest perceived label of an instance in the current frame, if shown.
    pub fn frame_label(&self, id: &str, p: &str) -> Option<bool> {
        let obs = self.last.as_ref()?;
        let r = self.table.get(id)?;
        self.frame
            .iter()
            .filter(|(_, u)| **u == r.uid)
            .find_map(|(k, _)| obs.detections.get(k).and_then(|d| d.labels.get(p).copied()))
    }

    /// Writes the modeled effects of a successful action with authority.
    pub fn apply_action_effect(&mut self, action: &MidAction) -> Result<(), WorldError> {
        let need = |t: &InstanceTable, id: &str| {
            t.get(id)
                .map(|_| ())
                .ok_or_else(|| WorldError::UnknownInstance(id.to_string()))
        };
        match action {
            MidAction::PickUp(x) => {
                need(&self.table, x)?;
                self.table.clear_mask(x, &mut self.map);
                let eye = self.pose.eye();
                for r in self.table.records.iter_mut().filter(|r| r.held) {
                    r.held = false;
                }
                let r = self.table.get_mut(x).expect("checked");
                r.held = true;
                r.pending = false;
                r.parent = None;
                r.hint = eye;
            }
            MidAction::Place(x, rec) => {
                need(&self.table, x)?;
                need(&self.table, rec)?;
                let rc = self.table.get(rec).expect("checked").centroid();
                let size = self.table.get(rec).expect("checked").size();
                let r = self.table.get_mut(x).expect("checked");
                r.held = false;
                r.pending = true;
                r.parent = Some(rec.clone());
                r.hint = [rc[0], rc[1], rc[2] + size[2] / 2.0];
                self.placement_effects(x, rec);
            }
            MidAction::ToggleOn(x) | MidAction::ToggleOff(x) => {
                need(&self.table, x)?;
                let on = matches!(action, MidAction::ToggleOn(_));
                self.table
                    .get_mut(x)
                    .expect("checked")
                    .set_authoritative("isToggled", on);
                if on {
                    self.toggle_effects(x);
                }
            }
            MidAction::Open(x) | MidAction::Close(x) => {
                need(&self.table, x)?;
                let open = matches!(action, MidAction::Open(_));
                self.table
                    .get_mut(x)
                    .expect("checked")
                    .set_authoritative("isOpen", open);
            }
            MidAction::Slice(x, _) => {
                need(&self.table, x)?;
                let r = self.table.get(x).expect("checked").clone();
                self.table.clear_mask(x, &mut self.map);
                self.table.remove(x, &mut self.map);
                if let Some((cat, n)) = self
                    .aff
                    .yield_of(&r.category)
                    .map(|(c, n)| (c.to_string(), n))
                {
                    let cookable = self.aff.get(&cat).cookable;
                    for _ in 0..n {
                        let c = self.table.register(&cat);
                        c.pending = true;
                        c.parent = r.parent.clone();
                        c.sliced_from = Some(r.id.clone());
                        c.hint = r.centroid();
                        c.set_authoritative("isSliced", true);
                        if cookable {
                            c.set_authoritative("isCooked", false);
                        }
                    }
                }
            }
            MidAction::Pour(x, y) => {
                need(&self.table, x)?;
                need(&self.table, y)?;
                let r = self.table.get_mut(x).expect("checked");
                r.set_authoritative("isFilledWithLiquid", false);
                r.set_authoritative("simbotIsFilledWithCoffee", false);
                if self
                    .aff
                    .get(&self.table.get(y).expect("checked").category)
                    .fillable
                {
                    self.table
                        .get_mut(y)
                        .expect("checked")
                        .set_authoritative("isFilledWithLiquid", true);
                }
            }
            MidAction::GoTo(_) | MidAction::Search(_) => {}
            MidAction::Other { name, .. } => return Err(WorldError::UnknownAction(name.clone())),
        }
        Ok(())
    }

    fn toggled(&self, id: &str) -> bool {
        self.table
            .get(id)
            .and_then(|r| r.state("isToggled"))
            .unwrap_or(false)
    }

    fn children(&self, id: &str) -> Vec<String> {
        self.table
            .records
            .iter()
            .filter(|r| r.parent.as_deref() == Some(id) && !r.held)
            .map(|r| r.id.clone())
            .collect()
    }

    fn cat(&self, id: &str) -> &crate::affordance::Affordance {
        let c = self
            .table
            .get(id)
            .map(|r| r.category.as_str())
            .unwrap_or("");
        self.aff.get(c)
    }

    fn set(&mut self, id: &str, p: &str) {
        if let Some(r) = self.table.get_mut(id) {
            r.set_authoritative(p, true);
        }
    }

    fn placement_effects(&mut self, x: &str, r: &str) {
        let (xa, ra) = (self.cat(x).clone(), self.cat(r).clone());
        let faucet_on = self
            .table
            .records
            .iter()
            .any(|f| self.aff.get(&f.category).faucet && f.state("isToggled") == Some(true));
        if ra.sink && faucet_on {
            self.set(x, "isClean");
            if xa.fillable {
                self.set(x, "isFilledWithLiquid");
            }
        }
        if ra.heater && xa.cookable && self.toggled(r) {
            self.set(x, "isCooked");
        }
        if ra.coffee_machine && xa.fillable && self.toggled(r) {
            self.set(x, "simbotIsFilledWithCoffee");
            self.set(x, "isFilledWithLiquid");
        }
        if ra.cookware && xa.cookable {
            let burner = self.table.get(r).and_then(|p| p.parent.clone());
            if burner.is_some_and(|b| self.cat(&b).stove_burner && self.toggled(&b)) {
                self.set(x, "isCooked");
            }
        }
        if xa.cookware && ra.stove_burner && self.toggled(r) {
            for z in self.children(x) {
                if self.cat(&z).cookable {
                    self.set(&z, "isCooked");
                }
            }
        }
    }

    fn toggle_effects(&mut self, x: &str) {
        let xa = self.cat(x).clone();
        for z in self.children(x) {
            let za = self.cat(&z).clone();
            if xa.heater && za.cookable {
                self.set(&z, "isCooked");
            }
            if xa.coffee_machine && za.fillable {
                self.set(&z, "simbotIsFilledWithCoffee");
                self.set(&z, "isFilledWithLiquid");
            }
            if xa.stove_burner && za.cookware {
                for w in self.children(&z) {
                    if self.cat(&w).cookable {
                        self.set(&w, "isCooked");
                    }
                }
            }
        }
        if xa.faucet {
            let sinks: Vec<String> = self
                .table
                .records
                .iter()
                .filter(|s| self.aff.get(&s.category).sink)
                .map(|s| s.id.clone())
                .collect();
            for s in sinks {
                for z in self.children(&s) {
                    self.set(&z, "isClean");
                    if self.cat(&z).fillable {
                        self.set(&z, "isFilledWithLiquid");
                    }
                }
            }
        }
    }

    /// Read-only view in the planner's belief format.
    pub fn snapshot(&self) -> Belief {
        let instances = self
            .table
            .records
            .iter()
            .map(|r| {
                let mut b = BeliefInstance::new(&r.id, &r.category, r.centroid());
                b.states = r
                    .states
                    .iter()
                    .filter_map(|(k, s)| s.value.map(|v| (k.clone(), v)))
                    .collect();
                b.parent = r.parent.clone();
                b.held = r.held;
                b.sliced_from = r.sliced_from.clone();
                if self.aff.get(&r.category).surface && !r.mask.is_empty() {
                    // a support surface holds one item per observed footprint cell
                    let cells: BTreeSet<(i32, i32)> = r.mask.iter().map(|v| (v[0], v[1])).collect();
                    b.capacity = Some(cells.len() as u32);
                }
                b
            })
            .collect();
        Belief {
            agent: self.pose.eye(),
            instances,
        }
    }

    pub fn table_json(&self) -> String {
        serde_json::to_string_pretty(&self.table).expect("table serializes")
    }
}

#[cfg(test)]
mod tests;
