use std::collections::VecDeque;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

/// Independent breadth-first distance from `start` to the nearest goal.
fn bfs_distance(
    grid: &OccupancyGrid,
    start: Cell,
    goals: &BTreeSet<Cell>,
    allow_unknown: bool,
) -> Option<usize> {
    let ok = |c: Cell| match grid.get(c) {
        CellState::Free => true,
        CellState::Unknown => allow_unknown,
        CellState::Blocked => false,
    };
    let mut seen = BTreeSet::from([start]);
    let mut q = VecDeque::from([(start, 0usize)]);
    while let Some((c, d)) = q.pop_front() {
        if goals.contains(&c) {
            return Some(d);
        }
        for n in [
            (c.0 + 1, c.1),
            (c.0 - 1, c.1),
            (c.0, c.1 + 1),
            (c.0, c.1 - 1),
        ] {
            if ok(n) && seen.insert(n) {
                q.push_back((n, d + 1));
            }
        }
    }
    None
}

fn grid_from(w: i32, h: i32, states: &[u8]) -> OccupancyGrid {
    let mut g = OccupancyGrid::new(w, h, CellState::Free);
    for y in 0..h {
        for x in 0..w {
            let s = match states[(y * w + x) as usize] % 10 {
                0..=2 => CellState::Blocked,
                3 => CellState::Unknown,
                _ => CellState::Free,
            };
            g.set((x, y), s);
        }
    }
    g
}

fn heading_of(i: u8) -> Heading {
    Heading::ALL[(i % 4) as usize]
}

proptest! {
    #[test]
    fn plan_path_matches_bfs_and_replays_to_goal(
        w in 2i32..14,
        h in 2i32..14,
        states in prop::collection::vec(any::<u8>(), 196),
        start in (0i32..14, 0i32..14),
        goal_cells in prop::collection::vec((0i32..14, 0i32..14), 1..4),
        start_heading in any::<u8>(),
        goal_heading in any::<u8>(),
        pitch_steps in -2i32..=2,
        allow_unknown in any::<bool>(),
    ) {
        let mut grid = grid_from(w, h, &states);
        let start = (start.0 % w, start.1 % h);
        grid.set(start, CellState::Free);
        let pitch = pitch_steps * PITCH_STEP;
        let mut region = NavGoalRegion::default();
        let mut goals = BTreeSet::new();
        for (x, y) in goal_cells {
            let c = (x % w, y % h);
            if grid.passable(c, allow_unknown) {
                region.goals.insert(c, (heading_of(goal_heading), pitch));
                goals.insert(c);
            }
        }
        let expected = bfs_distance(&grid, start, &goals, allow_unknown);
        match plan_path(&grid, start, &region, allow_unknown) {
            Ok(path) => {
                prop_assert_eq!(Some(path.len()), expected);
                let mut prev = start;
                for c in &path {
                    prop_assert_eq!((c.0 - prev.0).abs() + (c.1 - prev.1).abs(), 1);
                    prop_assert!(grid.passable(*c, allow_unknown));
                    prev = *c;
                }
                let end = path.last().copied().unwrap_or(start);
                let (hd, p) = region.goals[&end];
                let from = Pose { cell: start, heading: heading_of(start_heading), pitch: 0 };
                let prims = path_to_primitives(&path, from, hd, p);
                let landed = replay(from, &prims);
                prop_assert_eq!(landed, Pose { cell: end, heading: hd, pitch: p });
            }
            Err(e) => {
                prop_assert_eq!(e, NavError::Unreachable);
                prop_assert_eq!(expected, None);
            }
        }
    }

    #[test]
    fn plan_path_is_deterministic(
        states in prop::collection::vec(any::<u8>(), 100),
        gx in 0i32..10,
        gy in 0i32..10,
    ) {
        let mut grid = grid_from(10, 10, &states);
        grid.set((0, 0), CellState::Free);
        let region = NavGoalRegion::single((gx, gy), Heading::North, 0);
        prop_assert_eq!(plan_path(&grid, (0, 0), &region, false), plan_path(&grid, (0, 0), &region, false));
    }
}

#[test]
fn start_inside_goal_region_needs_no_moves() {
    let grid = OccupancyGrid::new(3, 3, CellState::Free);
    let region = NavGoalRegion::single((1, 1), Heading::East, -30);
    assert_eq!(plan_path(&grid, (1, 1), &region, false), Ok(vec![]));
    let prims = path_to_primitives(&[], Pose::new((1, 1), Heading::North), Heading::East, -30);
    assert_eq!(prims, vec![Primitive::TurnRight, Primitive::LookDown]);
}

#[test]
fn walled_goal_is_unreachable() {
    let mut grid = OccupancyGrid::new(5, 1, CellState::Free);
    grid.set((2, 0), CellState::Blocked);
    let region = NavGoalRegion::single((4, 0), Heading::North, 0);
    assert_eq!(
        plan_path(&grid, (0, 0), &region, false),
        Err(NavError::Unreachable)
    );
    grid.set((2, 0), CellState::Unknown);
    assert_eq!(
        plan_path(&grid, (0, 0), &region, false),
        Err(NavError::Unreachable)
    );
    assert_eq!(
        plan_path(&grid, (0, 0), &region, true).map(|p| p.len()),
        Ok(4)
    );
}

#[test]
fn out_of_bounds_cells_are_blocked() {
    let grid = OccupancyGrid::new(2, 2, CellState::Free);
    assert_eq!(grid.get((-1, 0)), CellState::Blocked);
    assert_eq!(grid.get((2, 1)), CellState::Blocked);
}

#[test]
fn view_pose_faces_target_and_pitches_down() {
    let from = cell_center((2, 2));
    let ahead = [from[0], from[1] + 1.0, EYE_HEIGHT];
    assert_eq!(view_pose(from, ahead), (Heading::North, 0));
    let low_east = [from[0] + 0.5, from[1], 0.5];
    let (h, p) = view_pose(from, low_east);
    assert_eq!(h, Heading::East);
    assert_eq!(p, -60);
    let west = [from[0] - 2.0, from[1] + 0.1, EYE_HEIGHT - 1.0];
    assert_eq!(view_pose(from, west), (Heading::West, -30));
}

#[test]
fn region_around_excludes_blocked_and_far_cells() {
    let mut grid = OccupancyGrid::new(5, 5, CellState::Free);
    grid.set((2, 3), CellState::Blocked);
    let c = cell_center((2, 2));
    let region = NavGoalRegion::around(&grid, [c[0], c[1], 1.0], 0.3, false);
    let cells: Vec<Cell> = region.goals.keys().copied().collect();
    assert_eq!(cells, vec![(1, 2), (2, 1), (3, 2)]);
    assert_eq!(region.goals[&(1, 2)].0, Heading::East);
}

#[test]
fn frontier_cells_border_unknown() {
    let mut grid = OccupancyGrid::new(3, 1, CellState::Free);
    grid.set((2, 0), CellState::Unknown);
    assert_eq!(grid.frontier(), vec![(1, 0)]);
}

#[test]
fn interaction_point_prefers_centroid_then_nearest() {
    assert_eq!(interaction_point(&[]), Err(NavError::NotVisible));
    let square: Vec<(usize, usize)> = (0..3).flat_map(|u| (0..3).map(move |v| (u, v))).collect();
    assert_eq!(interaction_point(&square), Ok((1, 1)));
    // ring without its centre: nearest pixels tie, raster order wins
    let ring: Vec<(usize, usize)> = square.into_iter().filter(|p| *p != (1, 1)).collect();
    assert_eq!(interaction_point(&ring), Ok((1, 0)));
}

#[test]
fn search_target_uses_frontier_without_instances() {
    let mut grid = OccupancyGrid::new(3, 1, CellState::Free);
    grid.set((2, 0), CellState::Unknown);
    let table = InstanceTable::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pose = Pose::new((0, 0), Heading::North);
    assert_eq!(
        select_search_target(&table, &pose, &grid, None, &mut rng),
        Ok(SearchTarget::Frontier((1, 0)))
    );
    let done = OccupancyGrid::new(3, 1, CellState::Free);
    assert_eq!(
        select_search_target(&table, &pose, &done, None, &mut rng),
        Err(NavError::NoFrontier)
    );
}

#[test]
fn search_target_skips_previous_instance() {
    let mut table = InstanceTable::new();
    for (cat, x) in [("Mug", 1.0), ("Bowl", 2.0), ("Apple", 3.0)] {
        table.register(cat).hint = [x, 0.0, 0.5];
    }
    let grid = OccupancyGrid::new(3, 3, CellState::Free);
    let pose = Pose::new((0, 0), Heading::North);
    let prev = SearchTarget::Instance("Mug_0".into());
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = select_search_target(&table, &pose, &grid, Some(&prev), &mut rng).unwrap();
        assert_ne!(t, prev);
    }
}

#[test]
fn replay_clamps_pitch() {
    let p = replay(Pose::new((0, 0), Heading::North), &[Primitive::LookDown; 4]);
    assert_eq!(p.pitch, -PITCH_LIMIT);
    let p = replay(p, &[Primitive::LookUp; 6]);
    assert_eq!(p.pitch, PITCH_LIMIT);
}
