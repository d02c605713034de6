//! Shared geometry: voxel grid conventions, agent pose, pinhole camera and
//! voxel ray traversal.
//!
//! Axes: x right, y forward at heading 0, z up; origin at the scene corner.
//! Headings turn clockwise seen from above, so heading 90 faces +x.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const VOXEL: f64 = 0.25;
pub const EYE_HEIGHT: f64 = 1.5;
/// Vertical voxel layers of every map (2.0 m).
pub const LAYERS: i32 = 8;
pub const PITCH_STEP: i32 = 30;
pub const PITCH_LIMIT: i32 = 60;

pub type Voxel = [i32; 3];
pub type Cell = (i32, i32);

pub fn voxel_of(p: [f64; 3]) -> Voxel {
    [
        (p[0] / VOXEL).floor() as i32,
        (p[1] / VOXEL).floor() as i32,
        (p[2] / VOXEL).floor() as i32,
    ]
}

pub fn voxel_center(v: Voxel) -> [f64; 3] {
    [
        (v[0] as f64 + 0.5) * VOXEL,
        (v[1] as f64 + 0.5) * VOXEL,
        (v[2] as f64 + 0.5) * VOXEL,
    ]
}

pub fn cell_center(c: Cell) -> [f64; 2] {
    [(c.0 as f64 + 0.5) * VOXEL, (c.1 as f64 + 0.5) * VOXEL]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u16", try_from = "u16")]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn degrees(self) -> u16 {
        match self {
            Heading::North => 0,
            Heading::East => 90,
            Heading::South => 180,
            Heading::West => 270,
        }
    }

    pub fn from_degrees(d: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|h| h.degrees() == d % 360)
    }

    pub fn right(self) -> Self {
        Heading::from_degrees(self.degrees() + 90).unwrap()
    }

    pub fn left(self) -> Self {
        Heading::from_degrees(self.degrees() + 270).unwrap()
    }

    /// Cell offset of one Forward step.
    pub fn delta(self) -> Cell {
        match self {
            Heading::North => (0, 1),
            Heading::East => (1, 0),
            Heading::South => (0, -1),
            Heading::West => (-1, 0),
        }
    }

    pub fn from_delta(d: Cell) -> Option<Self> {
        Self::ALL.into_iter().find(|h| h.delta() == d)
    }
}

impl From<Heading> for u16 {
    fn from(h: Heading) -> u16 {
        h.degrees()
    }
}

impl TryFrom<u16> for Heading {
    type Error = String;
    fn try_from(d: u16) -> Result<Self, String> {
        Heading::from_degrees(d).ok_or_else(|| format!("heading {d} not a multiple of 90"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub heading: Heading,
    /// Degrees, negative looks down.
    pub pitch: i32,
}

impl Pose {
    pub fn new(cell: Cell, heading: Heading) -> Self {
        Pose {
            cell,
            heading,
            pitch: 0,
        }
    }

    /// Eye position in meters.
    pub fn eye(&self) -> [f64; 3] {
        let [x, y] = cell_center(self.cell);
        [x, y, EYE_HEIGHT]
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}) h{} p{}",
            self.cell.0,
            self.cell.1,
            self.heading.degrees(),
            self.pitch
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            width: 60,
            height: 60,
            hfov_deg: 90.0,
        }
    }
}

impl Camera {
    pub fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.hfov_deg.to_radians() / 2.0).tan()
    }

    /// Camera basis (forward, right, up) for a pose.
    pub fn basis(pose: &Pose) -> [[f64; 3]; 3] {
        let th = (pose.heading.degrees() as f64).to_radians();
        let ph = (pose.pitch as f64).to_radians();
        let (st, ct) = th.sin_cos();
        let (sp, cp) = ph.sin_cos();
        [
            [st * cp, ct * cp, sp],
            [ct, -st, 0.0],
            [-st * sp, -ct * sp, cp],
        ]
    }

    /// Ray through pixel (u, v), scaled so its forward component is 1; a point
    /// at depth d lies at eye + d * ray. The principal point is pixel (W/2, H/2).
    pub fn pixel_ray(&self, pose: &Pose, u: usize, v: usize) -> [f64; 3] {
        let f = self.focal();
        let xc = (u as f64 - self.width as f64 / 2.0) / f;
        let yc = (self.height as f64 / 2.0 - v as f64) / f;
        let [fw, r, up] = Camera::basis(pose);
        [
            fw[0] + xc * r[0] + yc * up[0],
            fw[1] + xc * r[1] + yc * up[1],
            fw[2] + xc * r[2] + yc * up[2],
        ]
    }

    /// Pixel onto which a world point projects, if in front of the camera and
    /// inside the image.
    pub fn project(&self, pose: &Pose, p: [f64; 3]) -> Option<(usize, usize)> {
        let e = pose.eye();
        let d = [p[0] - e[0], p[1] - e[1], p[2] - e[2]];
        let [fw, r, up] = Camera::basis(pose);
        let dot = |a: [f64; 3]| a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
        let z = dot(fw);
        if z <= 1e-9 {
            return None;
        }
        let f = self.focal();
        let u = (dot(r) / z * f + self.width as f64 / 2.0).round();
        let v = (self.height as f64 / 2.0 - dot(up) / z * f).round();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }
}

/// Walks the voxels pierced by `origin + t * dir` for t in [0, t_max], in
/// order, calling `visit(voxel, t_enter)` until it returns true. Traversal
/// stops when the ray leaves `[0, dims)` after having been inside; cells
/// below the floor are reported once as `[x, y, -1]` so callers can detect
/// floor hits.
pub fn traverse(
    origin: [f64; 3],
    dir: [f64; 3],
    t_max: f64,
    dims: [i32; 3],
    mut visit: impl FnMut(Voxel, f64) -> bool,
) {
    let mut v = voxel_of(origin);
    let mut step = [0i32; 3];
    let mut t_next = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        if dir[a] > 0.0 {
            step[a] = 1;
            t_next[a] = ((v[a] + 1) as f64 * VOXEL - origin[a]) / dir[a];
            t_delta[a] = VOXEL / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            t_next[a] = (v[a] as f64 * VOXEL - origin[a]) / dir[a];
            t_delta[a] = -VOXEL / dir[a];
        }
    }
    let inside = |v: Voxel| (0..3).all(|a| v[a] >= 0 && v[a] < dims[a]);
    let mut t = 0.0;
    loop {
        if v[2] < 0 && v[0] >= 0 && v[0] < dims[0] && v[1] >= 0 && v[1] < dims[1] {
            visit(v, t);
            return;
        }
        if !inside(v) || t > t_max {
            return;
        }
        if visit(v, t) {
            return;
        }
        // smallest crossing; ties resolve in axis order for determinism
        let mut a = 0;
        for b in 1..3 {
            if t_next[b] < t_next[a] {
                a = b;
            }
        }
        if t_next[a].is_infinite() {
            return;
        }
        t = t_next[a];
        v[a] += step[a];
        t_next[a] += t_delta[a];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn heading_turns() {
        assert_eq!(Heading::North.right(), Heading::East);
        assert_eq!(Heading::North.left(), Heading::West);
        assert_eq!(Heading::East.delta(), (1, 0));
    }

    #[test]
    fn center_pixel_example() {
        let cam = Camera::default();
        let pose = Pose::new((0, 0), Heading::North);
        let r = cam.pixel_ray(&pose, 30, 30);
        let e = [0.0, 0.0, EYE_HEIGHT];
        let p = [e[0] + r[0], e[1] + r[1], e[2] + r[2]];
        assert_eq!(voxel_of(p), [0, 4, 6]);
    }

    #[test]
    fn project_inverts_pixel_ray() {
        let cam = Camera::default();
        let mut pose = Pose::new((3, 4), Heading::West);
        pose.pitch = -30;
        for (u, v) in [(0, 0), (17, 42), (59, 59), (30, 1)] {
            let r = cam.pixel_ray(&pose, u, v);
            let e = pose.eye();
            let p = [e[0] + 2.0 * r[0], e[1] + 2.0 * r[1], e[2] + 2.0 * r[2]];
            assert_eq!(cam.project(&pose, p), Some((u, v)));
        }
    }

    /// Independent slab test: entry parameter of the ray into a voxel box.
    fn slab(origin: [f64; 3], dir: [f64; 3], v: Voxel) -> Option<f64> {
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        for a in 0..3 {
            let (b0, b1) = (v[a] as f64 * VOXEL, (v[a] + 1) as f64 * VOXEL);
            if dir[a].abs() < 1e-12 {
                if origin[a] < b0 || origin[a] >= b1 {
                    return None;
                }
            } else {
                let (t0, t1) = ((b0 - origin[a]) / dir[a], (b1 - origin[a]) / dir[a]);
                lo = lo.max(t0.min(t1));
                hi = hi.min(t0.max(t1));
            }
        }
        (lo < hi - 1e-9).then_some(lo)
    }

    proptest! {
        #[test]
        fn dda_first_hit_matches_slab_oracle(
            ox in 0.3f64..2.2, oy in 0.3f64..2.2, oz in 0.3f64..1.9,
            dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0,
            solid in proptest::collection::btree_set((0i32..10, 0i32..10, 0i32..8), 1..30),
        ) {
            prop_assume!(dx.abs() + dy.abs() + dz.abs() > 0.1);
            let o = [ox, oy, oz];
            let d = [dx, dy, dz];
            let start = voxel_of(o);
            let solid: Vec<Voxel> = solid.into_iter().map(|(x, y, z)| [x, y, z]).filter(|v| *v != start).collect();
            let mut hit = None;
            traverse(o, d, 100.0, [10, 10, 8], |v, t| {
                if v[2] >= 0 && solid.contains(&v) { hit = Some((v, t)); true } else { false }
            });
            let oracle = solid.iter().filter_map(|&v| slab(o, d, v).map(|t| (v, t)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match (hit, oracle) {
                (None, None) => {}
                (Some((_, t)), Some((_, to))) => prop_assert!((t - to).abs() < 1e-9, "{t} vs {to}"),
                (h, o) => prop_assert!(false, "dda {h:?} oracle {o:?}"),
            }
        }
    }
}
