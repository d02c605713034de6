//! Grid navigation: occupancy from the voxel map, shortest paths, primitive
//! expansion, exploration targets and manipulation grounding pixels.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::geom::{cell_center, Cell, Heading, Pose, EYE_HEIGHT, PITCH_LIMIT, PITCH_STEP};
use crate::sim::{Primitive, BAND};
use crate::world::{farthest_instances, InstanceTable, Occupancy, VoxelMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NavError {
    #[error("no goal cell is reachable")]
    Unreachable,
    #[error("map fully explored and no instance known")]
    NoFrontier,
    #[error("instance has no pixels in the current frame")]
    NotVisible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellState {
    Free,
    Blocked,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    pub width: i32,
    pub height: i32,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn new(width: i32, height: i32, fill: CellState) -> Self {
        OccupancyGrid {
            width,
            height,
            cells: vec![fill; (width * height).max(0) as usize],
        }
    }

    /// Blocked when a voxel of the walking band is occupied, unknown when no
    /// band voxel was ever observed. Visited cells are free; `blocked` adds
    /// cells learned from failed moves.
    pub fn from_map(map: &VoxelMap, visited: &BTreeSet<Cell>, blocked: &BTreeSet<Cell>) -> Self {
        let d = map.dims();
        let mut g = OccupancyGrid::new(d[0], d[1], CellState::Unknown);
        for y in 0..d[1] {
            for x in 0..d[0] {
                let band: Vec<Occupancy> = (BAND.0..=BAND.1.min(d[2] - 1))
                    .map(|z| map.occupancy([x, y, z]))
                    .collect();
                let s = if band.contains(&Occupancy::Occupied) {
                    CellState::Blocked
                } else if band.iter().all(|o| *o == Occupancy::Unknown) {
                    CellState::Unknown
                } else {
                    CellState::Free
                };
                g.set((x, y), s);
            }
        }
        for c in visited {
            g.set(*c, CellState::Free);
        }
        for c in blocked {
            g.set(*c, CellState::Blocked);
        }
        g
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height
    }

    pub fn get(&self, c: Cell) -> CellState {
        if self.in_bounds(c) {
            self.cells[(c.1 * self.width + c.0) as usize]
        } else {
            CellState::Blocked
        }
    }

    pub fn set(&mut self, c: Cell, s: CellState) {
        if self.in_bounds(c) {
            let k = (c.1 * self.width + c.0) as usize;
            self.cells[k] = s;
        }
    }

    fn passable(&self, c: Cell, allow_unknown: bool) -> bool {
        match self.get(c) {
            CellState::Free => true,
            CellState::Unknown => allow_unknown,
            CellState::Blocked => false,
        }
    }

    /// Free cells with an unknown 4-neighbour.
    pub fn frontier(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get((x, y)) == CellState::Free
                    && neighbours((x, y))
                        .iter()
                        .any(|n| self.in_bounds(*n) && self.get(*n) == CellState::Unknown)
                {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

fn neighbours(c: Cell) -> [Cell; 4] {
    [
        (c.0 + 1, c.1),
        (c.0 - 1, c.1),
        (c.0, c.1 + 1),
        (c.0, c.1 - 1),
    ]
}

/// Cells from which a target is interactable, with the pose to assume there.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NavGoalRegion {
    pub goals: BTreeMap<Cell, (Heading, i32)>,
}

impl NavGoalRegion {
    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn single(c: Cell, heading: Heading, pitch: i32) -> Self {
        let mut goals = BTreeMap::new();
        goals.insert(c, (heading, pitch));
        NavGoalRegion { goals }
    }

    /// Cells within `radius` meters (horizontal) of `target` that the grid
    /// allows standing in, each with the facing that best views the target.
    pub fn around(
        grid: &OccupancyGrid,
        target: [f64; 3],
        radius: f64,
        allow_unknown: bool,
    ) -> Self {
        let mut goals = BTreeMap::new();
        for y in 0..grid.height {
            for x in 0..grid.width {
                let c = cell_center((x, y));
                let (dx, dy) = (target[0] - c[0], target[1] - c[1]);
                let dist = (dx * dx + dy * dy).sqrt();
                if dist > radius || dist < 1e-9 || !grid.passable((x, y), allow_unknown) {
                    continue;
                }
                goals.insert((x, y), view_pose(c, target));
            }
        }
        NavGoalRegion { goals }
    }
}

/// Heading most aligned with the target direction and the pitch step
/// nearest its elevation.
pub fn view_pose(from: [f64; 2], target: [f64; 3]) -> (Heading, i32) {
    let (dx, dy) = (target[0] - from[0], target[1] - from[1]);
    let heading = Heading::ALL
        .into_iter()
        .max_by(|a, b| {
            let s = |h: Heading| {
                let d = h.delta();
                d.0 as f64 * dx + d.1 as f64 * dy
            };
            s(*a).total_cmp(&s(*b)).then(b.degrees().cmp(&a.degrees()))
        })
        .expect("four headings");
    let d = heading.delta();
    let forward = (d.0 as f64 * dx + d.1 as f64 * dy).max(1e-6);
    let elev = (target[2] - EYE_HEIGHT).atan2(forward).to_degrees();
    let step = PITCH_STEP as f64;
    let pitch = ((elev / step).round() as i32 * PITCH_STEP).clamp(-PITCH_LIMIT, PITCH_LIMIT);
    (heading, pitch)
}

/// Shortest 4-connected path (excluding the start cell) to any goal cell.
/// Expansion order is (cost, x, y), which fixes ties deterministically.
pub fn plan_path(
    grid: &OccupancyGrid,
    start: Cell,
    goal: &NavGoalRegion,
    allow_unknown: bool,
) -> Result<Vec<Cell>, NavError> {
    if goal.goals.contains_key(&start) {
        return Ok(Vec::new());
    }
    let mut dist: BTreeMap<Cell, u32> = BTreeMap::new();
    let mut parent: BTreeMap<Cell, Cell> = BTreeMap::new();
    let mut open: BTreeSet<(u32, i32, i32)> = BTreeSet::new();
    dist.insert(start, 0);
    open.insert((0, start.0, start.1));
    while let Some((d, x, y)) = open.pop_first() {
        let c = (x, y);
        if dist.get(&c).is_some_and(|&best| best < d) {
            continue;
        }
        if goal.goals.contains_key(&c) {
            let mut path = vec![c];
            let mut cur = c;
            while let Some(&p) = parent.get(&cur) {
                if p == start {
                    break;
                }
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(path);
        }
        let mut ns = neighbours(c);
        ns.sort();
        for n in ns {
            if !grid.passable(n, allow_unknown) {
                continue;
            }
            let nd = d + 1;
            if dist.get(&n).is_none_or(|&old| nd < old) {
                dist.insert(n, nd);
                parent.insert(n, c);
                open.insert((nd, n.0, n.1));
            }
        }
    }
    Err(NavError::Unreachable)
}

fn turns(from: Heading, to: Heading) -> Vec<Primitive> {
    let diff = (to.degrees() + 360 - from.degrees()) % 360;
    match diff {
        0 => vec![],
        90 => vec![Primitive::TurnRight],
        270 => vec![Primitive::TurnLeft],
        _ => vec![Primitive::TurnRight, Primitive::TurnRight],
    }
}

/// Primitive sequence following `path` from `start` and ending at the given
/// heading and pitch.
pub fn path_to_primitives(
    path: &[Cell],
    start: Pose,
    heading: Heading,
    pitch: i32,
) -> Vec<Primitive> {
    let mut out = Vec::new();
    let mut cur = start;
    for &c in path {
        let d = (c.0 - cur.cell.0, c.1 - cur.cell.1);
        let h = Heading::from_delta(d).expect("path cells are 4-adjacent");
        out.extend(turns(cur.heading, h));
        out.push(Primitive::Forward);
        cur.heading = h;
        cur.cell = c;
    }
    out.extend(turns(cur.heading, heading));
    let mut p = cur.pitch;
    while p < pitch {
        out.push(Primitive::LookUp);
        p += PITCH_STEP;
    }
    while p > pitch {
        out.push(Primitive::LookDown);
        p -= PITCH_STEP;
    }
    out
}

/// Kinematic replay of primitives without obstacles.
pub fn replay(start: Pose, prims: &[Primitive]) -> Pose {
    let mut p = start;
    for a in prims {
        match a {
            Primitive::Forward => {
                let d = p.heading.delta();
                p.cell = (p.cell.0 + d.0, p.cell.1 + d.1);
            }
            Primitive::TurnLeft => p.heading = p.heading.left(),
            Primitive::TurnRight => p.heading = p.heading.right(),
            Primitive::LookUp => p.pitch = (p.pitch + PITCH_STEP).min(PITCH_LIMIT),
            Primitive::LookDown => p.pitch = (p.pitch - PITCH_STEP).max(-PITCH_LIMIT),
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchTarget {
    Instance(String),
    Frontier(Cell),
}

/// Exploration target: uniform over the five farthest known instances
/// (skipping `previous` when another exists), or a frontier cell when fewer
/// than two instances are known.
pub fn select_search_target(
    table: &InstanceTable,
    pose: &Pose,
    grid: &OccupancyGrid,
    previous: Option<&SearchTarget>,
    rng: &mut impl Rng,
) -> Result<SearchTarget, NavError> {
    if table.len() >= 2 {
        let far: Vec<SearchTarget> = farthest_instances(table, pose, 5)
            .into_iter()
            .map(|r| SearchTarget::Instance(r.id.clone()))
            .filter(|t| Some(t) != previous)
            .collect();
        return Ok(far[rng.gen_range(0..far.len())].clone());
    }
    let frontier: Vec<Cell> = grid
        .frontier()
        .into_iter()
        .filter(|c| previous != Some(&SearchTarget::Frontier(*c)))
        .collect();
    if !frontier.is_empty() {
        return Ok(SearchTarget::Frontier(
            frontier[rng.gen_range(0..frontier.len())],
        ));
    }
    table
        .records
        .first()
        .map(|r| SearchTarget::Instance(r.id.clone()))
        .ok_or(NavError::NoFrontier)
}

/// Pixel to act on: the mask centroid if on the mask, else the nearest mask
/// pixel (raster order breaks ties).
pub fn interaction_point(pixels: &[(usize, usize)]) -> Result<(usize, usize), NavError> {
    if pixels.is_empty() {
        return Err(NavError::NotVisible);
    }
    let n = pixels.len() as f64;
    let cu = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cv = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let c = (cu.round() as usize, cv.round() as usize);
    if pixels.contains(&c) {
        return Ok(c);
    }
    let mut sorted = pixels.to_vec();
    sorted.sort_by_key(|p| (p.1, p.0));
    Ok(*sorted
        .iter()
        .min_by(|a, b| {
            let d = |p: &(usize, usize)| (p.0 as f64 - cu).powi(2) + (p.1 as f64 - cv).powi(2);
            d(a).total_cmp(&d(b))
        })
        .expect("nonempty"))
}

#[cfg(test)]
mod tests;
