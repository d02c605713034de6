//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed. Pass criterion
//! numbers as arguments to run a subset.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delib::affordance::AffordanceTable;
use delib::exec::{
    csv_string, execute_plan, generate_suite, run_episode, run_suite, success_rate, write_trace,
    Budget, EpisodeOutcome, ExecConfig, SuiteEpisode, TraceRecord,
};
use delib::geom::{Heading, Pose, PITCH_STEP};
use delib::monitor::{satisfied_count, Subgoal, SubgoalPredicate};
use delib::nav::{
    path_to_primitives, plan_path, replay, CellState, NavError, NavGoalRegion, OccupancyGrid,
};
use delib::pddl::{ground, ground_with, parse_domain, parse_problem, GroundOptions};
use delib::planner::{
    search_plan, validate_plan, Belief, BeliefInstance, PlanOptions, PlanOutcome, PlanRequest,
    PlanResult, Planner,
};
use delib::sim::{
    check_goal_conditions, generate_scene, plw, plw_ratio, receptacle_full_episode, Difficulty,
    GoalCondition, GoalCount, MetricsReport, NoiseConfig, Primitive, Sim, TaskSpec, TaskTemplate,
};
use delib::world::{DetectionVoxels, InstanceTable, Projection, VoxelMap, WorldModel};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        name: "knife plan fidelity",
        limit: Duration::from_secs(1),
        run: knife_plan,
    },
    Criterion {
        id: 2,
        name: "planner soundness fuzz",
        limit: Duration::from_secs(120),
        run: soundness_fuzz,
    },
    Criterion {
        id: 3,
        name: "pruning equivalence+speed",
        limit: Duration::from_secs(600),
        run: pruning,
    },
    Criterion {
        id: 4,
        name: "instance matching",
        limit: Duration::from_secs(60),
        run: instance_matching,
    },
    Criterion {
        id: 5,
        name: "metrics",
        limit: Duration::from_secs(10),
        run: metrics,
    },
    Criterion {
        id: 6,
        name: "end-to-end benchmark",
        limit: Duration::from_secs(900),
        run: benchmark,
    },
    Criterion {
        id: 7,
        name: "recovery semantics",
        limit: Duration::from_secs(10),
        run: recovery,
    },
    Criterion {
        id: 8,
        name: "budget contract",
        limit: Duration::from_secs(60),
        run: budgets,
    },
    Criterion {
        id: 9,
        name: "navigation oracle",
        limit: Duration::from_secs(60),
        run: navigation,
    },
    Criterion {
        id: 10,
        name: "determinism",
        limit: Duration::from_secs(900),
        run: determinism,
    },
];

fn main() {
    let only: BTreeSet<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
    {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > c.limit => Err(format!("over the {:?} limit", c.limit)),
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += result.is_err() as u32;
        println!(
            "criterion {:>2} {:<26} {tag} {:>7.2}s  {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// 1 ------------------------------------------------------------------------

const KNIFE_DOMAIN: &str = include_str!("data/knife_domain.pddl");
const KNIFE_PROBLEM: &str = include_str!("data/knife_problem.pddl");

fn plan_names(r: &PlanResult) -> Vec<String> {
    match &r.outcome {
        PlanOutcome::Solved(p) => p.actions.iter().map(|a| a.to_string()).collect(),
        o => vec![format!("{o:?}")],
    }
}

fn knife_plan() -> Outcome {
    let d = parse_domain(KNIFE_DOMAIN).map_err(|e| e.to_string())?;
    let p = parse_problem(KNIFE_PROBLEM, &d).map_err(|e| e.to_string())?;
    let t = ground(&d, &p).map_err(|e| e.to_string())?;
    let plan = match search_plan(&t, Duration::from_secs(1)) {
        PlanOutcome::Solved(plan) => plan,
        o => return Err(format!("knife problem: {o:?}")),
    };
    let names: Vec<String> = plan.actions.iter().map(|a| a.to_string()).collect();
    ensure!(names == ["PickUp(Knife_0)"], "knife plan {names:?}");
    ensure!(
        validate_plan(&plan.indices, &t).valid,
        "knife plan does not validate"
    );

    // the same goal with no knife observed
    let mut belief = Belief::default();
    belief.instances.push(BeliefInstance::new(
        "DiningTable_0",
        "DiningTable",
        [1.0, 1.0, 0.5],
    ));
    let sg = Subgoal::unary("Knife", SubgoalPredicate::IsPickedUp);
    let r = Planner::household()
        .plan(
            PlanRequest {
                subgoal: &sg,
                belief: &belief,
            },
            &PlanOptions::default(),
        )
        .map_err(|e| e.to_string())?;
    let names = plan_names(&r);
    ensure!(
        names == ["Search(Knife_u0)", "GoTo(Knife_u0)", "PickUp(Knife_u0)"],
        "unobserved knife plan {names:?}"
    );
    Ok("PickUp(Knife_0); Search/GoTo/PickUp(Knife_u0)".into())
}

// 2 ------------------------------------------------------------------------

fn random_subgoal(
    rng: &mut ChaCha8Rng,
    belief: &Belief,
    task: &TaskSpec,
    aff: &AffordanceTable,
) -> Subgoal {
    if rng.gen_bool(0.5) {
        if let Some(c) = task.conditions.choose(rng) {
            return c.subgoal().expect("task subgoal");
        }
    }
    let cats: Vec<&str> = belief
        .instances
        .iter()
        .map(|i| i.category.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    loop {
        let patient = *cats.choose(rng).expect("scene has instances");
        let pred = *SubgoalPredicate::ALL.choose(rng).expect("predicates");
        let sg = if pred == SubgoalPredicate::IsPlacedTo {
            let dests: Vec<&str> = cats
                .iter()
                .copied()
                .filter(|c| aff.get(c).receptacle.is_some())
                .collect();
            match dests.choose(rng) {
                Some(d) => Subgoal::new(patient.to_string(), pred, Some(d.to_string())),
                None => continue,
            }
        } else {
            Subgoal::new(patient.to_string(), pred, None)
        };
        if let Ok(sg) = sg {
            return sg;
        }
    }
}

fn soundness_fuzz() -> Outcome {
    let planner = Planner::household();
    // ground truth is complete, so no unobserved stand-ins
    let opts = PlanOptions {
        allow_unobserved: false,
        ..PlanOptions::default()
    };
    let ground_opts = GroundOptions {
        static_filter: true,
        ..GroundOptions::default()
    };
    let (mut solved, mut other) = (0, 0);
    for i in 0..200u64 {
        let template = TaskTemplate::ALL[i as usize % TaskTemplate::ALL.len()];
        let diff = Difficulty {
            distractors: (i % 4) as u32 * 4,
            p_hidden: if i % 3 == 0 { 0.5 } else { 0.0 },
        };
        let ep = generate_scene(template, 5000 + i, diff).map_err(|e| e.to_string())?;
        let sim = Sim::new(&ep.scene, NoiseConfig::default(), i).map_err(|e| e.to_string())?;
        let truth = sim.truth();
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let sg = random_subgoal(&mut rng, &truth, &ep.task, &planner.affordances);
        let r = planner
            .plan(
                PlanRequest {
                    subgoal: &sg,
                    belief: &truth,
                },
                &opts,
            )
            .map_err(|e| format!("case {i} {sg}: {e}"))?;
        let PlanOutcome::Solved(plan) = &r.outcome else {
            other += 1;
            continue;
        };
        solved += 1;
        let task =
            ground_with(&planner.domain, &r.problem, ground_opts).map_err(|e| e.to_string())?;
        let verdict = validate_plan(&plan.indices, &task);
        ensure!(
            verdict.valid,
            "case {i} {sg}: plan {:?} fails validation",
            plan_names(&r)
        );
        let after = execute_plan(sim, plan).map_err(|e| format!("case {i} {sg}: {e}"))?;
        ensure!(
            satisfied_count(&after.truth(), &sg, after.affordances()) >= 1,
            "case {i} {sg}: executed plan {:?} leaves the subgoal unmet",
            plan_names(&r)
        );
    }
    ensure!(solved >= 50, "only {solved} solved cases");
    Ok(format!(
        "{solved} solved plans valid and executed, {other} unsolved"
    ))
}

// 3 ------------------------------------------------------------------------

fn verdict(o: &PlanOutcome) -> &'static str {
    match o {
        PlanOutcome::Solved(_) | PlanOutcome::GoalAlreadySatisfied => "solved",
        PlanOutcome::NoSolution => "no-solution",
        PlanOutcome::Timeout => "timeout",
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn pruning() -> Outcome {
    let planner = Planner::household();
    let diff = Difficulty {
        distractors: 200,
        p_hidden: 0.3,
    };
    let (mut pruned_t, mut full_t) = (Vec::new(), Vec::new());
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for i in 0..50u64 {
        let template = TaskTemplate::ALL[i as usize % TaskTemplate::ALL.len()];
        let ep = generate_scene(template, 9000 + i, diff).map_err(|e| e.to_string())?;
        let truth = Sim::new(&ep.scene, NoiseConfig::default(), 0)
            .map_err(|e| e.to_string())?
            .truth();
        let subgoals = ep.task.subgoals().map_err(|e| e.to_string())?;
        let impossible = [
            Subgoal::unary("Mug", SubgoalPredicate::IsSliced),
            Subgoal::unary("CounterTop", SubgoalPredicate::IsPickedUp),
            Subgoal::unary("Fridge", SubgoalPredicate::IsCooked),
        ];
        let sg = if i % 5 == 4 {
            &impossible[(i / 5) as usize % impossible.len()]
        } else {
            &subgoals[i as usize % subgoals.len()]
        };
        let req = PlanRequest {
            subgoal: sg,
            belief: &truth,
        };
        let mut results = Vec::new();
        for prune in [true, false] {
            let opts = PlanOptions {
                prune,
                ..PlanOptions::default()
            };
            results.push(planner.plan(req, &opts).map_err(|e| e.to_string())?);
        }
        let (a, b) = (verdict(&results[0].outcome), verdict(&results[1].outcome));
        ensure!(a == b, "case {i} {sg}: pruned {a}, unpruned {b}");
        ensure!(a != "timeout", "case {i} {sg}: timeout");
        *counts.entry(a).or_default() += 1;
        pruned_t.push(results[0].elapsed.as_secs_f64());
        full_t.push(results[1].elapsed.as_secs_f64());
    }
    let (mp, mf) = (median(pruned_t), median(full_t));
    let ratio = mp / mf;
    ensure!(
        ratio <= 0.2,
        "median pruned {mp:.4}s vs unpruned {mf:.4}s, ratio {ratio:.3}"
    );
    Ok(format!(
        "verdicts {counts:?} identical; median {:.2}ms vs {:.2}ms (ratio {ratio:.3})",
        mp * 1e3,
        mf * 1e3
    ))
}

// 4 ------------------------------------------------------------------------

fn det(key: u32, category: &str, voxels: &[[i32; 3]]) -> DetectionVoxels {
    DetectionVoxels {
        key,
        category: category.into(),
        voxels: voxels.iter().copied().collect(),
        labels: BTreeMap::new(),
    }
}

/// Integrates a crafted frame whose visible region is `visible` and matches
/// its detections.
fn frame(
    table: &mut InstanceTable,
    map: &mut VoxelMap,
    dets: Vec<DetectionVoxels>,
    visible: &[[i32; 3]],
    step: u32,
) -> BTreeMap<u32, u32> {
    let mut p = Projection::default();
    for d in &dets {
        for v in &d.voxels {
            p.hits.insert(*v, d.key);
            p.visible.insert(*v);
        }
    }
    p.visible.extend(visible.iter().copied());
    p.detections = dets;
    map.integrate(&p, step);
    table.match_instances(&p.detections, map)
}

fn mask(table: &InstanceTable, id: &str) -> Option<BTreeSet<[i32; 3]>> {
    table.get(id).map(|r| r.mask.clone())
}

fn instance_matching() -> Outcome {
    let dims = [12, 12, 8];

    // new detection registers an instance
    let mut map = VoxelMap::new(dims);
    let mut table = InstanceTable::new();
    let assoc = frame(
        &mut table,
        &mut map,
        vec![det(7, "Mug", &[[2, 2, 3], [2, 2, 4]])],
        &[],
        1,
    );
    ensure!(table.len() == 1, "register: {} instances", table.len());
    let uid = table.get("Mug_0").map(|r| r.uid);
    ensure!(
        uid.is_some() && assoc.get(&7) == uid.as_ref(),
        "register: association {assoc:?}"
    );
    ensure!(
        mask(&table, "Mug_0") == Some([[2, 2, 3], [2, 2, 4]].into()),
        "register: mask"
    );

    // equal counts merge with the nearest instance and take the mask union
    let mut map = VoxelMap::new(dims);
    let mut table = InstanceTable::new();
    frame(
        &mut table,
        &mut map,
        vec![det(1, "Mug", &[[2, 2, 3]]), det(2, "Mug", &[[8, 8, 3]])],
        &[],
        1,
    );
    let ids: Vec<(String, [f64; 3])> = table
        .records
        .iter()
        .map(|r| (r.id.clone(), r.centroid()))
        .collect();
    ensure!(ids.len() == 2, "merge setup: {ids:?}");
    let near = |x: i32| {
        table
            .records
            .iter()
            .find(|r| r.mask.iter().any(|v| v[0] == x))
            .map(|r| r.id.clone())
            .unwrap_or_default()
    };
    let (left, right) = (near(2), near(8));
    let assoc = frame(
        &mut table,
        &mut map,
        vec![
            det(5, "Mug", &[[8, 8, 3], [8, 9, 3]]),
            det(6, "Mug", &[[2, 2, 3], [3, 2, 3]]),
        ],
        &[],
        2,
    );
    ensure!(table.len() == 2, "merge: {} instances", table.len());
    ensure!(
        mask(&table, &left) == Some([[2, 2, 3], [3, 2, 3]].into()),
        "merge: left mask"
    );
    ensure!(
        mask(&table, &right) == Some([[8, 8, 3], [8, 9, 3]].into()),
        "merge: right mask"
    );
    let uid_of = |id: &str| table.get(id).map(|r| r.uid);
    ensure!(
        assoc.get(&6).copied() == uid_of(&left) && assoc.get(&5).copied() == uid_of(&right),
        "merge: association {assoc:?}"
    );
    // union keeps voxels outside the new detection
    frame(
        &mut table,
        &mut map,
        vec![det(9, "Mug", &[[2, 2, 4]])],
        &[[2, 2, 3], [3, 2, 3]],
        3,
    );
    let m = mask(&table, &left).unwrap_or_default();
    ensure!(
        m == [[2, 2, 3], [3, 2, 3], [2, 2, 4]].into(),
        "merge: union {m:?}"
    );
    ensure!(
        table.len() == 2,
        "merge: {} instances after partial view",
        table.len()
    );

    // visible instances left unmatched are removed; unseen ones stay
    let mut map = VoxelMap::new(dims);
    let mut table = InstanceTable::new();
    frame(
        &mut table,
        &mut map,
        vec![
            det(1, "Bowl", &[[1, 1, 2]]),
            det(2, "Bowl", &[[5, 5, 2]]),
            det(3, "Bowl", &[[10, 10, 2]]),
        ],
        &[],
        1,
    );
    ensure!(table.len() == 3, "surplus setup: {} instances", table.len());
    let far = table
        .records
        .iter()
        .find(|r| r.mask.contains(&[10, 10, 2]))
        .map(|r| r.id.clone())
        .unwrap();
    let gone = table
        .records
        .iter()
        .find(|r| r.mask.contains(&[1, 1, 2]))
        .map(|r| r.id.clone())
        .unwrap();
    let kept = table
        .records
        .iter()
        .find(|r| r.mask.contains(&[5, 5, 2]))
        .map(|r| r.id.clone())
        .unwrap();
    frame(
        &mut table,
        &mut map,
        vec![det(4, "Bowl", &[[5, 5, 2]])],
        &[[1, 1, 2]],
        2,
    );
    ensure!(table.get(&gone).is_none(), "surplus: {gone} survived");
    ensure!(
        map.owner([1, 1, 2]).is_none(),
        "surplus: removed instance still owns voxels"
    );
    ensure!(table.get(&kept).is_some(), "surplus: {kept} lost");
    ensure!(table.get(&far).is_some(), "surplus: unseen {far} removed");

    // re-observing a static scene never adds instances
    let mut grew = Vec::new();
    for s in 0..100u64 {
        let template = TaskTemplate::ALL[s as usize % TaskTemplate::ALL.len()];
        let diff = Difficulty {
            distractors: (s % 5) as u32 * 3,
            p_hidden: 0.0,
        };
        let ep = generate_scene(template, 300 + s, diff).map_err(|e| e.to_string())?;
        let mut sim = Sim::new(&ep.scene, NoiseConfig::default(), s).map_err(|e| e.to_string())?;
        let mut frames = vec![sim.observe()];
        let script = [
            Primitive::TurnLeft,
            Primitive::TurnLeft,
            Primitive::TurnLeft,
            Primitive::TurnLeft,
            Primitive::LookDown,
            Primitive::TurnRight,
            Primitive::TurnRight,
            Primitive::TurnRight,
            Primitive::TurnRight,
        ];
        for a in script {
            frames.push(sim.step(delib::sim::Action::Nav(a)).1);
        }
        let mut world = WorldModel::new(
            sim.dims(),
            sim.camera(),
            AffordanceTable::household(),
            frames[0].pose,
        );
        for f in &frames {
            world.update(f);
        }
        let first = world.table.len();
        for f in &frames {
            world.update(f);
        }
        let second = world.table.len();
        if second > first {
            grew.push((s, first, second));
        }
    }
    ensure!(
        grew.is_empty(),
        "instance count grew on re-observation: {grew:?}"
    );
    Ok("register, merge, surplus removal; 100 scenes idempotent".into())
}

// 5 ------------------------------------------------------------------------

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn reduced(n: u64, d: u64) -> (u64, u64) {
    let g = gcd(n, d).max(1);
    (n / g, d / g)
}

fn ulps(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut triples: Vec<(u64, u64, u32, u32)> = vec![
        (1, 1, 10, 10),
        (1, 1, 37, 37),
        (1, 2, 25, 25),
        (1, 1, 10_000, 10),
        (3, 4, 9_999, 3),
        (1, 1, 5, 40),
        (0, 1, 50, 50),
    ];
    while triples.len() < 20 {
        let q = rng.gen_range(1..=12u64);
        let p = rng.gen_range(0..=q);
        triples.push((p, q, rng.gen_range(1..2_000), rng.gen_range(1..500)));
    }
    for &(p, q, l_hat, l_star) in &triples {
        let mx = l_hat.max(l_star) as u64;
        let want = reduced(l_star as u64, mx);
        let (n, d) = plw_ratio(l_hat, l_star);
        ensure!(
            reduced(n as u64, d as u64) == want,
            "weight for ({l_hat}, {l_star}): {n}/{d} vs {want:?}"
        );
        let (en, ed) = reduced(p * l_star as u64, q * mx);
        let exact = en as f64 / ed as f64;
        let got = plw(p as f64 / q as f64, l_hat, l_star);
        let tol = if p == 0 || p == q { 0 } else { 2 };
        ensure!(
            ulps(got, exact) <= tol,
            "plw({p}/{q}, {l_hat}, {l_star}) = {got}, exact {en}/{ed}"
        );
    }

    let aff = AffordanceTable::household();
    let cats = ["Mug", "Bowl", "Plate", "Apple", "Potato"];
    let unary = [
        SubgoalPredicate::IsClean,
        SubgoalPredicate::IsCooked,
        SubgoalPredicate::IsPickedUp,
    ];
    let dests = ["CounterTop", "Sink", "Fridge"];
    for t in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
        let mut belief = Belief::default();
        for (k, d) in dests.iter().enumerate() {
            belief.instances.push(BeliefInstance::new(
                &format!("{d}_0"),
                d,
                [k as f64, 0.0, 0.5],
            ));
        }
        let mut per_cat: BTreeMap<&str, u32> = BTreeMap::new();
        for _ in 0..rng.gen_range(0..12) {
            let cat = *cats.choose(&mut rng).unwrap();
            let n = per_cat.entry(cat).or_default();
            let mut inst = BeliefInstance::new(&format!("{cat}_{n}"), cat, [0.0; 3]);
            *n += 1;
            for s in ["isClean", "isCooked"] {
                if rng.gen_bool(0.5) {
                    inst.states.insert(s.into(), rng.gen_bool(0.7));
                }
            }
            if rng.gen_bool(0.5) {
                inst.parent = Some(format!("{}_0", dests.choose(&mut rng).unwrap()));
            }
            belief.instances.push(inst);
        }
        let held = belief.instances.len() > 3 && rng.gen_bool(0.3);
        if held {
            let k = rng.gen_range(3..belief.instances.len());
            belief.instances[k].held = true;
        }
        let mut conditions = Vec::new();
        for _ in 0..rng.gen_range(1..4) {
            let cat = *cats.choose(&mut rng).unwrap();
            let count = rng.gen_range(1..4);
            conditions.push(if rng.gen_bool(0.4) {
                GoalCondition::placed(cat, dests.choose(&mut rng).unwrap(), count)
            } else {
                GoalCondition::new(cat, *unary.choose(&mut rng).unwrap(), count)
            });
        }
        // brute force: every instance checked against every condition
        let (mut sat, mut total) = (0u32, 0u32);
        for c in &conditions {
            let mut n = 0;
            for i in &belief.instances {
                if i.category != c.patient {
                    continue;
                }
                let ok = match (c.predicate, &c.destination) {
                    (SubgoalPredicate::IsPickedUp, _) => i.held,
                    (SubgoalPredicate::IsPlacedTo, Some(d)) => {
                        !i.held
                            && i.parent.as_ref().is_some_and(|p| {
                                belief
                                    .instances
                                    .iter()
                                    .any(|r| &r.id == p && &r.category == d)
                            })
                    }
                    (pred, _) => i.states.get(pred.symbol()) == Some(&true),
                };
                n += ok as u32;
            }
            sat += n.min(c.count);
            total += c.count;
        }
        let task = TaskSpec {
            name: format!("t{t}"),
            conditions,
        };
        let got = check_goal_conditions(&task, &belief, &aff).map_err(|e| e.to_string())?;
        ensure!(
            got == GoalCount {
                satisfied: sat,
                total
            },
            "task {t}: {got:?} vs {sat}/{total}"
        );
        let report = MetricsReport::new(got, 10, 10);
        ensure!(
            report.goal_condition_rate == sat as f64 / total as f64,
            "task {t}: fraction"
        );
        ensure!(report.success == (sat == total), "task {t}: success flag");
    }
    Ok("20 plw triples exact; 20 goal-condition counts match".into())
}

// 6 ------------------------------------------------------------------------

const JOBS: usize = 8;

/// Named configuration and its outcomes.
struct SuiteRun {
    name: &'static str,
    outcomes: Vec<EpisodeOutcome>,
}

fn suites() -> (Vec<SuiteEpisode>, Vec<SuiteEpisode>) {
    let clean = generate_suite(&TaskTemplate::ALL, 10, 0, Difficulty::default(), JOBS)
        .expect("clean suite");
    let hidden = Difficulty {
        distractors: 0,
        p_hidden: 0.5,
    };
    let hidden = generate_suite(&TaskTemplate::ALL, 10, 0, hidden, JOBS).expect("hidden suite");
    (clean, hidden)
}

fn configs() -> Vec<(&'static str, bool, ExecConfig)> {
    let noisy = ExecConfig {
        noise: NoiseConfig {
            p_action_fail: 0.1,
            ..NoiseConfig::default()
        },
        ..ExecConfig::default()
    };
    vec![
        ("clean", false, ExecConfig::default()),
        ("hidden", true, ExecConfig::default()),
        ("fail0.1", false, noisy.clone()),
        (
            "fail0.1 --no-replanning",
            false,
            ExecConfig {
                replanning: false,
                ..noisy.clone()
            },
        ),
        (
            "fail0.1 --last-subgoal-only",
            false,
            ExecConfig {
                last_subgoal_only: true,
                ..noisy
            },
        ),
    ]
}

fn run_all(jobs: usize) -> Vec<SuiteRun> {
    let (clean, hidden) = suites();
    let planner = Planner::household();
    configs()
        .into_iter()
        .map(|(name, use_hidden, cfg)| {
            let suite = if use_hidden { &hidden } else { &clean };
            SuiteRun {
                name,
                outcomes: run_suite(suite, &planner, &cfg, jobs),
            }
        })
        .collect()
}

static FIRST_RUN: OnceLock<Vec<SuiteRun>> = OnceLock::new();

fn benchmark() -> Outcome {
    let runs = FIRST_RUN.get_or_init(|| run_all(JOBS));
    let mut sr = BTreeMap::new();
    for r in runs {
        let errors: Vec<&str> = r
            .outcomes
            .iter()
            .filter(|o| o.run.is_err())
            .map(|o| o.name.as_str())
            .collect();
        ensure!(errors.is_empty(), "{}: episodes errored {errors:?}", r.name);
        ensure!(
            r.outcomes.len() == 120,
            "{}: {} episodes",
            r.name,
            r.outcomes.len()
        );
        sr.insert(r.name, success_rate(&r.outcomes));
    }
    let summary = sr
        .iter()
        .map(|(k, v)| format!("{k} {v:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure!(sr["clean"] == 1.0, "clean SR below 1: {summary}");
    ensure!(sr["hidden"] >= 0.8, "hidden SR below 0.8: {summary}");
    ensure!(
        sr["fail0.1"] > sr["fail0.1 --no-replanning"],
        "replanning ablation: {summary}"
    );
    ensure!(
        sr["fail0.1"] > sr["fail0.1 --last-subgoal-only"],
        "last-subgoal ablation: {summary}"
    );
    Ok(summary)
}

// 7 ------------------------------------------------------------------------

fn recovery() -> Outcome {
    let ep = receptacle_full_episode().map_err(|e| e.to_string())?;
    let subgoals = ep.task.subgoals().map_err(|e| e.to_string())?;
    let planner = Planner::household();
    let run = |cfg: ExecConfig| {
        run_episode(
            &ep.scene,
            &ep.task,
            &subgoals,
            &planner,
            &cfg,
            ep.reference_length,
        )
    };
    let with = run(ExecConfig::default()).map_err(|e| e.to_string())?;
    ensure!(
        with.summary.report.success,
        "recovery enabled: episode failed ({:?})",
        with.summary.failure
    );
    let trace = &with.trace;
    let full = trace
        .iter()
        .position(|r| {
            r.exception
                .as_ref()
                .is_some_and(|e| e.kind.name() == "ReceptacleFull")
        })
        .ok_or("no ReceptacleFull exception in trace")?;
    let clear = trace[full..]
        .iter()
        .position(|r| {
            r.recovery
                .as_deref()
                .is_some_and(|s| s.starts_with("clear-receptacle"))
        })
        .map(|k| k + full)
        .ok_or("no clear-receptacle recovery after the exception")?;
    let clearing = |r: &TraceRecord| {
        r.active_subgoal
            .as_deref()
            .is_some_and(|s| s.contains("isPlacedTo, CounterTop"))
    };
    let cleared = trace[clear..]
        .iter()
        .position(clearing)
        .map(|k| k + clear)
        .ok_or("no clearing subgoal executed")?;
    let resumed = trace[cleared..]
        .iter()
        .position(|r| {
            !clearing(r)
                && r.active_subgoal
                    .as_deref()
                    .is_some_and(|s| s.contains("Apple"))
        })
        .ok_or("original subgoal not resumed after clearing")?;
    ensure!(
        trace
            .last()
            .and_then(|r| r.metrics.as_ref())
            .is_some_and(|m| m.report.success),
        "final record"
    );

    let without = run(ExecConfig {
        replanning: false,
        ..ExecConfig::default()
    })
    .map_err(|e| e.to_string())?;
    ensure!(
        !without.summary.report.success,
        "episode succeeded without recovery"
    );
    Ok(format!(
        "ReceptacleFull@{} -> {} -> clearing@{} -> resumed@{} -> success; fails without recovery",
        trace[full].step,
        trace[clear].recovery.as_deref().unwrap_or_default(),
        trace[cleared].step,
        trace[cleared + resumed].step
    ))
}

// 8 ------------------------------------------------------------------------

/// Steps spent per contiguous run of one active subgoal.
fn subgoal_spans(trace: &[TraceRecord]) -> Vec<(String, u32)> {
    let mut spans: Vec<(String, u32)> = Vec::new();
    let mut prev_step = 0;
    for r in trace {
        let label = r.active_subgoal.clone().unwrap_or_default();
        let delta = r.step - prev_step;
        prev_step = r.step;
        match spans.last_mut() {
            Some((l, n)) if *l == label => *n += delta,
            _ => spans.push((label, delta)),
        }
    }
    spans
}

fn budgets() -> Outcome {
    let planner = Planner::household();
    let budget = Budget::default();
    let mut cases: Vec<(
        String,
        delib::sim::GeneratedEpisode,
        Vec<Subgoal>,
        NoiseConfig,
    )> = Vec::new();
    let impossible = [
        Subgoal::unary("Mug", SubgoalPredicate::IsSliced),
        Subgoal::unary("Television", SubgoalPredicate::IsPickedUp),
        Subgoal::placed("CounterTop", "Mug"),
        Subgoal::unary("Bathtub", SubgoalPredicate::IsFilledWithLiquid),
    ];
    for (k, t) in [
        TaskTemplate::Coffee,
        TaskTemplate::Salad,
        TaskTemplate::Sandwich,
    ]
    .into_iter()
    .enumerate()
    {
        let ep = generate_scene(
            t,
            40 + k as u64,
            Difficulty {
                distractors: 12,
                p_hidden: 0.5,
            },
        )
        .map_err(|e| e.to_string())?;
        let mut sgs = impossible.to_vec();
        sgs.rotate_left(k);
        cases.push((
            format!("{t} unsatisfiable"),
            ep.clone(),
            sgs,
            NoiseConfig::default(),
        ));
        let truth = ep.task.subgoals().map_err(|e| e.to_string())?;
        let always_fail = NoiseConfig {
            p_action_fail: 1.0,
            ..NoiseConfig::default()
        };
        cases.push((
            format!("{t} p_action_fail=1"),
            ep.clone(),
            truth,
            always_fail,
        ));
        let noisy = NoiseConfig {
            p_action_fail: 1.0,
            p_detection_drop: 0.5,
            p_state_flip: 0.3,
            depth_sigma: 0.05,
        };
        cases.push((format!("{t} all noise"), ep, impossible.to_vec(), noisy));
    }
    let mut worst = (0, 0, 0);
    for (name, ep, sgs, noise) in &cases {
        let cfg = ExecConfig {
            noise: *noise,
            seed: 8,
            ..ExecConfig::default()
        };
        let run = run_episode(
            &ep.scene,
            &ep.task,
            sgs,
            &planner,
            &cfg,
            ep.reference_length,
        )
        .map_err(|e| format!("{name}: {e}"))?;
        let s = &run.summary;
        ensure!(s.steps <= budget.max_steps, "{name}: {} steps", s.steps);
        ensure!(
            s.failed_actions <= budget.max_failures,
            "{name}: {} failed actions",
            s.failed_actions
        );
        let span = subgoal_spans(&run.trace)
            .into_iter()
            .map(|(_, n)| n)
            .max()
            .unwrap_or(0);
        ensure!(
            span <= budget.subgoal_steps,
            "{name}: {span} steps on one subgoal"
        );
        ensure!(!s.report.success, "{name}: unexpectedly succeeded");
        ensure!(s.failure.is_some(), "{name}: no failure category");
        let last = run.trace.last().and_then(|r| r.metrics.as_ref());
        ensure!(
            last.map(|m| m.failure) == Some(s.failure),
            "{name}: trace metrics disagree"
        );
        let with_metrics = run.trace.iter().filter(|r| r.metrics.is_some()).count();
        ensure!(with_metrics == 1, "{name}: {with_metrics} metrics records");
        worst = (
            worst.0.max(s.steps),
            worst.1.max(s.failed_actions),
            worst.2.max(span),
        );
    }
    Ok(format!(
        "{} episodes; max steps {}, failed actions {}, subgoal span {}",
        cases.len(),
        worst.0,
        worst.1,
        worst.2
    ))
}

// 9 ------------------------------------------------------------------------

fn passable(grid: &OccupancyGrid, c: (i32, i32), allow_unknown: bool) -> bool {
    let inside = c.0 >= 0 && c.1 >= 0 && c.0 < grid.width && c.1 < grid.height;
    inside
        && match grid.get(c) {
            CellState::Free => true,
            CellState::Unknown => allow_unknown,
            CellState::Blocked => false,
        }
}

fn bfs(
    grid: &OccupancyGrid,
    start: (i32, i32),
    goals: &BTreeSet<(i32, i32)>,
    allow_unknown: bool,
) -> Option<usize> {
    let ok = |c: (i32, i32)| passable(grid, c, allow_unknown);
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([(start, 0)]);
    while let Some((c, d)) = queue.pop_front() {
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
                queue.push_back((n, d + 1));
            }
        }
    }
    None
}

fn navigation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut reached, mut unreachable) = (0, 0);
    for case in 0..500 {
        let (w, h) = (rng.gen_range(2..24), rng.gen_range(2..24));
        let mut grid = OccupancyGrid::new(w, h, CellState::Free);
        let density = rng.gen_range(0.0..0.45);
        for y in 0..h {
            for x in 0..w {
                let r: f64 = rng.gen();
                let s = if r < density {
                    CellState::Blocked
                } else if r < density + 0.1 {
                    CellState::Unknown
                } else {
                    CellState::Free
                };
                grid.set((x, y), s);
            }
        }
        let start = (rng.gen_range(0..w), rng.gen_range(0..h));
        grid.set(start, CellState::Free);
        let allow_unknown = rng.gen_bool(0.5);
        let mut region = NavGoalRegion::default();
        for _ in 0..rng.gen_range(1..5) {
            let c = (rng.gen_range(0..w), rng.gen_range(0..h));
            if passable(&grid, c, allow_unknown) {
                let heading = Heading::ALL[rng.gen_range(0..4)];
                region
                    .goals
                    .insert(c, (heading, rng.gen_range(-2..=2) * PITCH_STEP));
            }
        }
        let goals: BTreeSet<(i32, i32)> = region.goals.keys().copied().collect();
        let expected = bfs(&grid, start, &goals, allow_unknown);
        match plan_path(&grid, start, &region, allow_unknown) {
            Ok(path) => {
                ensure!(
                    Some(path.len()) == expected,
                    "case {case}: length {} vs bfs {expected:?}",
                    path.len()
                );
                let mut prev = start;
                for &c in &path {
                    ensure!(
                        (c.0 - prev.0).abs() + (c.1 - prev.1).abs() == 1,
                        "case {case}: jump"
                    );
                    ensure!(
                        passable(&grid, c, allow_unknown),
                        "case {case}: impassable cell"
                    );
                    prev = c;
                }
                let end = path.last().copied().unwrap_or(start);
                let (heading, pitch) = region.goals[&end];
                let from = Pose {
                    cell: start,
                    heading: Heading::ALL[case % 4],
                    pitch: 0,
                };
                let landed = replay(from, &path_to_primitives(&path, from, heading, pitch));
                ensure!(
                    landed
                        == Pose {
                            cell: end,
                            heading,
                            pitch
                        },
                    "case {case}: replay landed at {landed:?}"
                );
                reached += 1;
            }
            Err(e) => {
                ensure!(
                    e == NavError::Unreachable && expected.is_none(),
                    "case {case}: {e:?} vs bfs {expected:?}"
                );
                unreachable += 1;
            }
        }
    }
    Ok(format!(
        "500 grids: {reached} reached exactly, {unreachable} unreachable agreed"
    ))
}

// 10 -----------------------------------------------------------------------

/// Trace files and CSV written to disk for one set of runs.
fn written(runs: &[SuiteRun], dir: &std::path::Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for (k, r) in runs.iter().enumerate() {
        let sub = dir.join(format!("config{k}"));
        std::fs::create_dir_all(&sub).map_err(|e| e.to_string())?;
        let csv = sub.join("results.csv");
        std::fs::write(&csv, csv_string(&r.outcomes).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        for o in &r.outcomes {
            let run = o.run.as_ref().map_err(|e| format!("{}: {e}", o.name))?;
            write_trace(&sub.join(format!("{}.jsonl", o.name)), &run.trace)
                .map_err(|e| e.to_string())?;
        }
        for entry in std::fs::read_dir(&sub).map_err(|e| e.to_string())? {
            let p = entry.map_err(|e| e.to_string())?.path();
            let key = format!("{}/{}", r.name, p.file_name().unwrap().to_string_lossy());
            out.insert(key, std::fs::read(&p).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let first = FIRST_RUN.get_or_init(|| run_all(JOBS));
    let again = run_all(3);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = written(first, &tmp.path().join("a"))?;
    let b = written(&again, &tmp.path().join("b"))?;
    ensure!(a.len() == b.len(), "{} vs {} files", a.len(), b.len());
    let differing: Vec<&String> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    ensure!(
        differing.is_empty(),
        "{} files differ, e.g. {:?}",
        differing.len(),
        &differing[..differing.len().min(3)]
    );
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!(
        "{} files ({bytes} bytes) identical across job counts",
        a.len()
    ))
}
