use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::geom::Voxel;
use crate::planner::{euclid, ordinal};

use super::map::{mean_center, DetectionVoxels, VoxelMap};

/// One state entry: value (None = unknown) and whether an executed action set it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StateEntry {
    pub value: Option<bool>,
    pub authoritative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceRecord {
    /// Stable handle, never reused within a table.
    pub uid: u32,
    pub id: String,
    pub category: String,
    pub mask: BTreeSet<Voxel>,
    pub states: BTreeMap<String, StateEntry>,
    pub parent: Option<String>,
    pub held: bool,
    /// Created by an action and not yet re-observed; absorbs the first
    /// matching surplus detection.
    pub pending: bool,
    pub sliced_from: Option<String>,
    /// Position estimate used while the mask is empty.
    pub hint: [f64; 3],
}

impl InstanceRecord {
    pub fn centroid(&self) -> [f64; 3] {
        if self.mask.is_empty() {
            self.hint
        } else {
            mean_center(&self.mask)
        }
    }

    pub fn state(&self, p: &str) -> Option<bool> {
        self.states.get(p).and_then(|s| s.value)
    }

    /// Bounding size in meters of the voxel mask.
    pub fn size(&self) -> [f64; 3] {
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for v in &self.mask {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        if self.mask.is_empty() {
            return [0.0; 3];
        }
        [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as f64 * crate::geom::VOXEL)
    }

    /// Writes a perceived label unless an action owns the entry.
    pub fn perceive(&mut self, p: &str, value: bool) {
        let e = self.states.entry(p.to_string()).or_default();
        if !e.authoritative {
            e.value = Some(value);
        }
    }

    pub fn set_authoritative(&mut self, p: &str, value: bool) {
        self.states.insert(
            p.to_string(),
            StateEntry {
                value: Some(value),
                authoritative: true,
            },
        );
    }
}

/// Registry of observed instances.
#[derive(Debug, Clone, Default, Serialize)]
pub struct InstanceTable {
    pub records: Vec<InstanceRecord>,
    next_ordinal: BTreeMap<String, u32>,
    next_uid: u32,
}

/// Category counts at which assignment switches from exact to greedy.
pub const EXACT_ASSIGNMENT_MAX: usize = 6;

impl InstanceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&InstanceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut InstanceRecord> {
        self.records.iter_mut().find(|r| r.id == id)
    }

    pub fn by_uid(&self, uid: u32) -> Option<&InstanceRecord> {
        self.records.iter().find(|r| r.uid == uid)
    }

    /// Registers a new instance with the next free ordinal of its category.
    pub fn register(&mut self, category: &str) -> &mut InstanceRecord {
        let n = self.next_ordinal.entry(category.to_string()).or_default();
        let id = format!("{category}_{n}");
        *n += 1;
        let uid = self.next_uid;
        self.next_uid += 1;
        self.records.push(InstanceRecord {
            uid,
            id,
            category: category.to_string(),
            mask: BTreeSet::new(),
            states: BTreeMap::new(),
            parent: None,
            held: false,
            pending: false,
            sliced_from: None,
            hint: [0.0; 3],
        });
        self.records.last_mut().expect("just pushed")
    }

    /// Drops a record and releases its voxels. Children lose their parent.
    pub fn remove(&mut self, id: &str, map: &mut VoxelMap) {
        if let Some(k) = self.records.iter().position(|r| r.id == id) {
            let r = self.records.remove(k);
            for v in &r.mask {
                if map.owner(*v) == Some(r.uid) {
                    map.set_owner(*v, None);
                }
            }
            for c in self
                .records
                .iter_mut()
                .filter(|c| c.parent.as_deref() == Some(id))
            {
                c.parent = None;
            }
        }
    }

    /// Releases all voxels of a record (picked up, retired).
    pub fn clear_mask(&mut self, id: &str, map: &mut VoxelMap) {
        if let Some(r) = self.get_mut(id) {
            let uid = r.uid;
            for v in std::mem::take(&mut r.mask) {
                if map.owner(v) == Some(uid) {
                    map.set_owner(v, None);
                }
            }
        }
    }

    /// Releases voxels observed free from their owners, keeping at least one
    /// voxel per mask.
    pub fn release_free(&mut self, free: &BTreeSet<Voxel>, map: &mut VoxelMap) {
        for &v in free {
            let Some(o) = map.owner(v) else { continue };
            if let Some(r) = self.records.iter_mut().find(|r| r.uid == o) {
                if r.mask.len() <= 1 {
                    continue;
                }
                r.mask.remove(&v);
            }
            map.set_owner(v, None);
        }
    }

    /// Adds detection voxels to a record. A voxel owned by another instance
    /// is taken over unless that would leave the other mask empty.
    fn merge(&mut self, k: usize, voxels: &BTreeSet<Voxel>, map: &mut VoxelMap) {
        let uid = self.records[k].uid;
        for &v in voxels {
            match map.owner(v) {
                Some(o) if o == uid => {}
                Some(o) => {
                    let Some(j) = self.records.iter().position(|r| r.uid == o) else {
                        map.set_owner(v, Some(uid));
                        self.records[k].mask.insert(v);
                        continue;
                    };
                    if self.records[j].mask.len() > 1 {
                        self.records[j].mask.remove(&v);
                        map.set_owner(v, Some(uid));
                        self.records[k].mask.insert(v);
                    }
                }
                None => {
                    map.set_owner(v, Some(uid));
                    self.records[k].mask.insert(v);
                }
            }
        }
    }

    /// Appendix matching of one frame's detections against the table.
    /// Returns the frame key to instance uid association.
    pub fn match_instances(
        &mut self,
        detections: &[DetectionVoxels],
        map: &mut VoxelMap,
    ) -> BTreeMap<u32, u32> {
        let mut by_cat: BTreeMap<&str, Vec<&DetectionVoxels>> = BTreeMap::new();
        for d in detections {
            by_cat.entry(d.category.as_str()).or_default().push(d);
        }
        let mut assoc = BTreeMap::new();
        let mut doomed = Vec::new();
        for (cat, dets) in by_cat {
            let visible: Vec<usize> = self
                .records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.category == cat && !r.held && !r.pending)
                .filter(|(_, r)| r.mask.iter().any(|v| map.is_visible(*v)))
                .map(|(k, _)| k)
                .collect();
            let dc: Vec<[f64; 3]> = dets.iter().map(|d| d.centroid()).collect();
            let ic: Vec<[f64; 3]> = visible
                .iter()
                .map(|&k| self.records[k].centroid())
                .collect();
            let pairs = assign(&dc, &ic);
            let mut used_d = vec![false; dets.len()];
            let mut used_i = vec![false; visible.len()];
            for (di, ii) in pairs {
                used_d[di] = true;
                used_i[ii] = true;
                let k = visible[ii];
                self.merge(k, &dets[di].voxels, map);
                assoc.insert(dets[di].key, self.records[k].uid);
            }
            for (ii, &k) in visible.iter().enumerate() {
                if !used_i[ii] {
                    doomed.push(self.records[k].id.clone());
                }
            }
            // surplus: pending instances first, nearest pair at a time
            let mut surplus: Vec<usize> = (0..dets.len()).filter(|&d| !used_d[d]).collect();
            loop {
                let pend: Vec<usize> = self
                    .records
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.category == cat && r.pending)
                    .map(|(k, _)| k)
                    .collect();
                let best = surplus
                    .iter()
                    .flat_map(|&d| pend.iter().map(move |&k| (d, k)))
                    .min_by(|a, b| {
                        let da = euclid(dc[a.0], self.records[a.1].hint);
                        let db = euclid(dc[b.0], self.records[b.1].hint);
                        da.total_cmp(&db)
                            .then(dets[a.0].key.cmp(&dets[b.0].key))
                            .then(
                                ordinal(&self.records[a.1].id).cmp(&ordinal(&self.records[b.1].id)),
                            )
                    });
                let Some((d, k)) = best else { break };
                self.records[k].pending = false;
                self.merge(k, &dets[d].voxels, map);
                assoc.insert(dets[d].key, self.records[k].uid);
                surplus.retain(|&s| s != d);
            }
            for d in surplus {
                let r = self.register(cat);
                let uid = r.uid;
                let k = self.records.len() - 1;
                self.merge(k, &dets[d].voxels, map);
                assoc.insert(dets[d].key, uid);
            }
        }
        for id in doomed {
            self.remove(&id, map);
        }
        // detections whose voxels were all claimed elsewhere stay unregistered
        let empty: Vec<String> = self
            .records
            .iter()
            .filter(|r| r.mask.is_empty() && !r.held && !r.pending)
            .map(|r| r.id.clone())
            .collect();
        for id in empty {
            self.remove(&id, map);
        }
        assoc.retain(|_, uid| self.by_uid(*uid).is_some());
        for d in detections {
            if let Some(r) = assoc
                .get(&d.key)
                .and_then(|u| self.records.iter_mut().find(|r| r.uid == *u))
            {
                for (p, v) in &d.labels {
                    r.perceive(p, *v);
                }
            }
        }
        assoc
    }
}

/// Minimum total-distance matching between detections and instances of
/// `min(n, m)` pairs: exact enumeration for small counts, greedy nearest pair
/// otherwise. Returns (detection, instance) index pairs.
pub fn assign(dets: &[[f64; 3]], insts: &[[f64; 3]]) -> Vec<(usize, usize)> {
    let (n, m) = (dets.len(), insts.len());
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let cost = |d: usize, i: usize| euclid(dets[d], insts[i]);
    if n.max(m) <= EXACT_ASSIGNMENT_MAX {
        // assign each of the smaller side to a distinct element of the larger
        let small_is_det = n <= m;
        let (s, l) = if small_is_det { (n, m) } else { (m, n) };
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut cur = Vec::with_capacity(s);
        let mut used = vec![false; l];
        fn rec(
            s: usize,
            l: usize,
            cur: &mut Vec<usize>,
            used: &mut [bool],
            acc: f64,
            c: &dyn Fn(usize, usize) -> f64,
            best: &mut Option<(f64, Vec<usize>)>,
        ) {
            if cur.len() == s {
                if best.as_ref().is_none_or(|b| acc < b.0 - 1e-12) {
                    *best = Some((acc, cur.clone()));
                }
                return;
            }
            let a = cur.len();
            for b in 0..l {
                if !used[b] {
                    used[b] = true;
                    cur.push(b);
                    rec(s, l, cur, used, acc + c(a, b), c, best);
                    cur.pop();
                    used[b] = false;
                }
            }
        }
        let c = |a: usize, b: usize| if small_is_det { cost(a, b) } else { cost(b, a) };
        rec(s, l, &mut cur, &mut used, 0.0, &c, &mut best);
        let (_, perm) = best.expect("at least one assignment");
        return perm
            .into_iter()
            .enumerate()
            .map(|(a, b)| if small_is_det { (a, b) } else { (b, a) })
            .collect();
    }
    let mut all: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|d| (0..m).map(move |i| (d, i)))
        .map(|(d, i)| (cost(d, i), d, i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut ud, mut ui) = (vec![false; n], vec![false; m]);
    let mut out = Vec::new();
    for (_, d, i) in all {
        if !ud[d] && !ui[i] {
            ud[d] = true;
            ui[i] = true;
            out.push((d, i));
        }
    }
    out.sort();
    out
}
