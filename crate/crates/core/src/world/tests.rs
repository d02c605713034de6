use std::collections::BTreeSet;

use super::*;
use crate::affordance::AffordanceTable;
use crate::sim::{generate_scene, Difficulty, NoiseConfig, Sim, TaskTemplate};

#[test]
fn noiseless_projection_lands_in_rendered_voxels() {
    let ep = generate_scene(TaskTemplate::Salad, 1, Difficulty::default()).unwrap();
    let mut sim = Sim::new(&ep.scene, NoiseConfig::default(), 0).unwrap();
    let mut bad = 0;
    use crate::sim::{Action, Primitive::*};
    let script = [
        LookDown, Forward, Forward, TurnRight, Forward, Forward, Forward, LookDown, TurnLeft,
        Forward, Forward, Forward, Forward, TurnLeft, TurnLeft, LookUp, TurnRight, Forward,
        Forward, Forward, Forward, Forward, LookDown,
    ];
    for a in script {
        let (_, obs) = sim.step(Action::Nav(a));
        let p = project_observation(&obs, &sim.camera(), sim.dims());
        for (v, key) in &p.hits {
            if *key == 0 {
                continue;
            }
            let cat = &obs.detections[key].category;
            let truth = sim.instance_at(*v).map(|s| s.to_string());
            if truth
                .as_deref()
                .is_none_or(|t| !t.starts_with(cat.as_str()))
            {
                bad += 1;
                println!("{v:?} key {key} {cat} truth {truth:?}");
            }
        }
    }
    assert_eq!(bad, 0);
}

fn brute_min_cost(d: &[[f64; 3]], i: &[[f64; 3]]) -> f64 {
    // minimum over injective maps from the smaller side into the larger
    fn rec(a: &[[f64; 3]], b: &[[f64; 3]], k: usize, used: &mut Vec<bool>) -> f64 {
        if k == a.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                let c = crate::planner::euclid(a[k], b[j]) + rec(a, b, k + 1, used);
                used[j] = false;
                best = best.min(c);
            }
        }
        best
    }
    let (a, b) = if d.len() <= i.len() { (d, i) } else { (i, d) };
    if a.is_empty() {
        return 0.0;
    }
    rec(a, b, 0, &mut vec![false; b.len()])
}

fn point() -> impl proptest::strategy::Strategy<Value = [f64; 3]> {
    use proptest::prelude::*;
    (0i32..20, 0i32..20, 0i32..8)
        .prop_map(|(x, y, z)| [x as f64 * 0.25, y as f64 * 0.25, z as f64 * 0.25])
}

proptest::proptest! {
    #[test]
    fn exact_assignment_is_optimal_and_injective(
        d in proptest::collection::vec(point(), 0..6),
        i in proptest::collection::vec(point(), 0..6),
    ) {
        let pairs = assign(&d, &i);
        proptest::prop_assert_eq!(pairs.len(), d.len().min(i.len()));
        let ds: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
        let is: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        proptest::prop_assert_eq!(ds.len(), pairs.len());
        proptest::prop_assert_eq!(is.len(), pairs.len());
        let cost: f64 = pairs.iter().map(|&(a, b)| crate::planner::euclid(d[a], i[b])).sum();
        proptest::prop_assert!((cost - brute_min_cost(&d, &i)).abs() < 1e-9);
    }

    #[test]
    fn greedy_assignment_is_injective(
        d in proptest::collection::vec(point(), 7..12),
        i in proptest::collection::vec(point(), 0..12),
    ) {
        let pairs = assign(&d, &i);
        proptest::prop_assert_eq!(pairs.len(), d.len().min(i.len()));
        let is: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        proptest::prop_assert_eq!(is.len(), pairs.len());
    }
}

#[test]
fn action_labels_outrank_perception() {
    let mut t = InstanceTable::new();
    let r = t.register("Mug");
    r.perceive("isClean", false);
    assert_eq!(r.state("isClean"), Some(false));
    r.set_authoritative("isClean", true);
    r.perceive("isClean", false);
    assert_eq!(r.state("isClean"), Some(true));
    assert_eq!(r.state("isFilledWithLiquid"), None);
}

#[test]
fn ordinals_are_per_category_and_never_reused() {
    let mut t = InstanceTable::new();
    let mut map = VoxelMap::new([4, 4, 4]);
    assert_eq!(t.register("Mug").id, "Mug_0");
    assert_eq!(t.register("Bowl").id, "Bowl_0");
    assert_eq!(t.register("Mug").id, "Mug_1");
    t.remove("Mug_1", &mut map);
    assert_eq!(t.register("Mug").id, "Mug_2");
}

#[test]
fn on_relation_needs_overlap_and_affordance() {
    let aff = AffordanceTable::household();
    let mug = (10.0, 10.0, 20.0, 20.0);
    let table = (0.0, 18.0, 40.0, 40.0);
    assert!(predict_on_relation(mug, table, "Mug", "DiningTable", &aff));
    assert!(!predict_on_relation(mug, table, "Mug", "Mug", &aff));
    let beside = (50.0, 18.0, 60.0, 40.0);
    assert!(!predict_on_relation(
        mug,
        beside,
        "Mug",
        "DiningTable",
        &aff
    ));
    let below = (0.0, 25.0, 40.0, 40.0);
    assert!(!predict_on_relation(mug, below, "Mug", "DiningTable", &aff));
}

#[test]
fn voxels_seen_free_leave_their_mask() {
    let mut t = InstanceTable::new();
    let mut map = VoxelMap::new([4, 4, 4]);
    let det = DetectionVoxels {
        key: 1,
        category: "Mug".into(),
        voxels: [[1, 1, 1], [1, 1, 2]].into(),
        labels: Default::default(),
    };
    t.match_instances(&[det], &mut map);
    t.release_free(&[[1, 1, 2], [3, 3, 3]].into(), &mut map);
    assert_eq!(t.records[0].mask, [[1, 1, 1]].into());
    assert_eq!(map.owner([1, 1, 2]), None);
    // the last voxel is kept
    t.release_free(&[[1, 1, 1]].into(), &mut map);
    assert_eq!(t.records[0].mask.len(), 1);
}
