use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::geom::{traverse, voxel_center, Camera, Cell, Voxel, VOXEL};
use crate::sim::Observation;

/// Relative slack past the measured depth when walking a pixel ray.
pub const DEPTH_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Occupancy {
    Unknown,
    Free,
    Occupied,
}

/// Dense voxel grid of occupancy and instance ownership.
#[derive(Debug, Clone)]
pub struct VoxelMap {
    dims: [i32; 3],
    occ: Vec<Occupancy>,
    /// Owning instance uid + 1; 0 when unowned.
    owner: Vec<u32>,
    last_seen: Vec<u32>,
    visible: Vec<bool>,
    visible_list: Vec<Voxel>,
}

/// Voxels of one frame detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionVoxels {
    pub key: u32,
    pub category: String,
    pub voxels: BTreeSet<Voxel>,
    pub labels: BTreeMap<String, bool>,
}

impl DetectionVoxels {
    pub fn centroid(&self) -> [f64; 3] {
        mean_center(&self.voxels)
    }
}

/// Back-projected frame: per-detection voxel sets, hit voxels and the
/// visibility mask.
#[derive(Debug, Clone, Default)]
pub struct Projection {
    pub detections: Vec<DetectionVoxels>,
    /// Voxels hit by some pixel; unkeyed hits (walls, clutter with dropped
    /// detections) carry key 0.
    pub hits: BTreeMap<Voxel, u32>,
    /// Voxels traversed before the hit.
    pub free: BTreeSet<Voxel>,
    /// Free voxels plus hit voxels.
    pub visible: BTreeSet<Voxel>,
}

pub fn mean_center(voxels: &BTreeSet<Voxel>) -> [f64; 3] {
    let n = voxels.len().max(1) as f64;
    let mut c = [0.0; 3];
    for v in voxels {
        let p = voxel_center(*v);
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    c.map(|x| x / n)
}

fn in_dims(v: Voxel, dims: [i32; 3]) -> bool {
    (0..3).all(|a| v[a] >= 0 && v[a] < dims[a])
}

/// Pinhole back-projection of every pixel with positive depth.
pub fn project_observation(obs: &Observation, camera: &Camera, dims: [i32; 3]) -> Projection {
    let eye = obs.pose.eye();
    let mut p = Projection::default();
    let mut det: BTreeMap<u32, BTreeSet<Voxel>> = BTreeMap::new();
    // pixels whose stored depth matches several entered voxels
    let mut tied: Vec<(u32, Vec<Voxel>)> = Vec::new();
    for v in 0..obs.height {
        for u in 0..obs.width {
            let depth = obs.depth[v * obs.width + u];
            let d = depth as f64;
            if !(d > 0.0) {
                continue;
            }
            let ray = camera.pixel_ray(&obs.pose, u, v);
            // candidates are the voxels entered at the stored depth, compared
            // at the precision the depth was stored with
            let mut before: Vec<Voxel> = Vec::new();
            let mut at: Vec<Voxel> = Vec::new();
            traverse(
                eye,
                ray,
                d + DEPTH_TOLERANCE * d.max(1.0),
                dims,
                |vox, t| {
                    let t = t as f32;
                    if t > depth {
                        return true;
                    }
                    if t == depth {
                        at.push(vox);
                    } else {
                        before.push(vox);
                    }
                    vox[2] < 0
                },
            );
            if at.is_empty() {
                // depth rounded below every entry; take the last voxel entered
                let Some(last) = before.pop() else { continue };
                at.push(last);
            }
            p.free
                .extend(before.into_iter().filter(|v| in_dims(*v, dims)));
            let key = obs.seg[v * obs.width + u];
            if at.len() > 1 {
                tied.push((key, at));
                continue;
            }
            let hit = at[0];
            if !in_dims(hit, dims) {
                continue;
            }
            p.hits.entry(hit).or_insert(key);
            if key != 0 {
                det.entry(key).or_default().insert(hit);
            }
        }
    }
    // a tied pixel keeps a candidate its detection already hit unambiguously;
    // otherwise it only contributes when its detection has no other voxel
    for (key, at) in tied {
        let own = at.iter().find(|v| p.hits.get(*v) == Some(&key));
        let hit = match own {
            Some(v) => *v,
            None if key != 0 && !det.contains_key(&key) => {
                match at
                    .iter()
                    .find(|v| in_dims(**v, dims) && !p.hits.contains_key(*v))
                {
                    Some(v) => *v,
                    None => continue,
                }
            }
            None => continue,
        };
        if !in_dims(hit, dims) {
            continue;
        }
        p.hits.entry(hit).or_insert(key);
        if key != 0 {
            det.entry(key).or_default().insert(hit);
        }
    }
    for h in p.hits.keys() {
        p.free.remove(h);
    }
    p.visible = p.free.iter().chain(p.hits.keys()).copied().collect();
    for (key, voxels) in det {
        let Some(d) = obs.detections.get(&key) else {
            continue;
        };
        p.detections.push(DetectionVoxels {
            key,
            category: d.category.clone(),
            voxels,
            labels: d.labels.clone(),
        });
    }
    p
}

impl VoxelMap {
    pub fn new(dims: [i32; 3]) -> Self {
        let n = (dims[0] * dims[1] * dims[2]).max(0) as usize;
        VoxelMap {
            dims,
            occ: vec![Occupancy::Unknown; n],
            owner: vec![0; n],
            last_seen: vec![0; n],
            visible: vec![false; n],
            visible_list: Vec::new(),
        }
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    fn idx(&self, v: Voxel) -> Option<usize> {
        in_dims(v, self.dims).then(|| ((v[2] * self.dims[1] + v[1]) * self.dims[0] + v[0]) as usize)
    }

    pub fn occupancy(&self, v: Voxel) -> Occupancy {
        self.idx(v).map_or(Occupancy::Unknown, |i| self.occ[i])
    }

    pub fn owner(&self, v: Voxel) -> Option<u32> {
        self.idx(v).and_then(|i| self.owner[i].checked_sub(1))
    }

    pub fn set_owner(&mut self, v: Voxel, uid: Option<u32>) {
        if let Some(i) = self.idx(v) {
            self.owner[i] = uid.map_or(0, |u| u + 1);
        }
    }

    pub fn last_seen(&self, v: Voxel) -> u32 {
        self.idx(v).map_or(0, |i| self.last_seen[i])
    }

    pub fn is_visible(&self, v: Voxel) -> bool {
        self.idx(v).is_some_and(|i| self.visible[i])
    }

    pub fn visible_voxels(&self) -> &[Voxel] {
        &self.visible_list
    }

    /// Whether any voxel of the column has been observed.
    pub fn column_seen(&self, c: Cell) -> bool {
        (0..self.dims[2]).any(|z| self.occupancy([c.0, c.1, z]) != Occupancy::Unknown)
    }

    /// Writes occupancy and the visibility mask from a projection. Last
    /// observation wins, so moved objects are carved out.
    pub fn integrate(&mut self, p: &Projection, step: u32) {
        for &v in &self.visible_list.clone() {
            if let Some(i) = self.idx(v) {
                self.visible[i] = false;
            }
        }
        self.visible_list.clear();
        for &v in &p.free {
            if let Some(i) = self.idx(v) {
                self.occ[i] = Occupancy::Free;
                self.last_seen[i] = step;
            }
        }
        for &v in p.hits.keys() {
            if let Some(i) = self.idx(v) {
                self.occ[i] = Occupancy::Occupied;
                self.last_seen[i] = step;
            }
        }
        for &v in &p.visible {
            if let Some(i) = self.idx(v) {
                self.visible[i] = true;
                self.visible_list.push(v);
            }
        }
    }

    /// Marks the agent's column free in the walking band.
    pub fn mark_free_column(&mut self, c: Cell, band: (i32, i32)) {
        for z in band.0..=band.1 {
            if let Some(i) = self.idx([c.0, c.1, z]) {
                if self.owner[i] == 0 {
                    self.occ[i] = Occupancy::Free;
                }
            }
        }
    }

    /// Per-layer occupancy grids as PGM images plus a JSON header.
    pub fn dump(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = serde_json::json!({ "dims": self.dims, "voxel_size": VOXEL });
        std::fs::write(dir.join("map.json"), serde_json::to_string_pretty(&header)?)?;
        for z in 0..self.dims[2] {
            let mut buf = format!("P2\n{} {}\n2\n", self.dims[0], self.dims[1]);
            for y in (0..self.dims[1]).rev() {
                let row: Vec<String> = (0..self.dims[0])
                    .map(|x| match self.occupancy([x, y, z]) {
                        Occupancy::Unknown => "1",
                        Occupancy::Free => "2",
                        Occupancy::Occupied => "0",
                    })
                    .map(str::to_string)
                    .collect();
                buf.push_str(&row.join(" "));
                buf.push('\n');
            }
            std::fs::write(dir.join(format!("layer_{z}.pgm")), buf)?;
        }
        Ok(())
    }
}
