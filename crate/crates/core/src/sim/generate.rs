use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affordance::AffordanceTable;
use crate::geom::{Cell, Heading, Pose, Voxel};

use super::scene::{GoalCondition, InstanceSpec, SceneSpec, TaskSpec, TaskTemplate};
use super::SimError;

/// Scene generation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Difficulty {
    /// Extra floor-level clutter instances.
    pub distractors: u32,
    /// Probability that each required item starts inside a closed container.
    pub p_hidden: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedEpisode {
    pub scene: SceneSpec,
    pub task: TaskSpec,
    /// Step count of the oracle solver under full observability.
    pub reference_length: u32,
}

const DISTRACTORS: [&str; 14] = [
    "Vase",
    "Statue",
    "RemoteControl",
    "Newspaper",
    "Candle",
    "Laptop",
    "KeyChain",
    "CellPhone",
    "Watch",
    "Pen",
    "Pencil",
    "CreditCard",
    "SoapBar",
    "Towel",
];

fn items(t: TaskTemplate) -> &'static [&'static str] {
    match t {
        TaskTemplate::WaterPlant => &["Cup"],
        TaskTemplate::Coffee => &["Mug"],
        TaskTemplate::Toast => &["Bread", "Knife"],
        TaskTemplate::Boil => &["Potato", "Pot"],
        TaskTemplate::PutAll => &["Pillow", "Pillow"],
        TaskTemplate::CleanAll => &["Plate", "Plate"],
        TaskTemplate::Slices => &["Tomato", "Knife", "Plate"],
        TaskTemplate::Sandwich => &["Bread", "Knife", "Plate", "Lettuce"],
        TaskTemplate::Salad => &["Lettuce", "Tomato", "Knife", "Bowl"],
        TaskTemplate::CookSlice => &["Potato", "Knife", "Pan"],
        TaskTemplate::Books => &["Book", "Book"],
        TaskTemplate::FriedEgg => &["Egg", "Pan"],
    }
}

/// Initial state flags implied by a category's affordances.
fn initial_states(cat: &str, aff: &AffordanceTable) -> BTreeMap<String, bool> {
    let a = aff.get(cat);
    let mut s = BTreeMap::new();
    let mut off = |k: &str| {
        s.insert(k.to_string(), false);
    };
    if a.openable {
        off("isOpen");
    }
    if a.toggleable {
        off("isToggled");
    }
    if a.cookable {
        off("isCooked");
    }
    if a.sliceable.is_some() {
        off("isSliced");
    }
    if a.fillable {
        off("isFilledWithLiquid");
        if a.pickupable {
            off("simbotIsFilledWithCoffee");
        }
    }
    if matches!(cat, "Mug" | "Cup" | "Plate" | "Bowl" | "Pan" | "Pot") {
        off("isClean");
    }
    s
}

struct Builder {
    aff: AffordanceTable,
    instances: Vec<InstanceSpec>,
    ordinals: BTreeMap<String, u32>,
}

impl Builder {
    fn add(&mut self, cat: &str, origin: Voxel, size: [i32; 3], parent: Option<&str>) -> String {
        let n = self.ordinals.entry(cat.to_string()).or_default();
        let id = format!("{cat}_{n}");
        *n += 1;
        let mut s = InstanceSpec::new(&id, cat, origin, size);
        s.states = initial_states(cat, &self.aff);
        s.parent = parent.map(str::to_string);
        self.instances.push(s);
        id
    }
}

/// Seeded layout without the oracle run.
pub fn layout(
    template: TaskTemplate,
    seed: u64,
    diff: Difficulty,
) -> Result<(SceneSpec, TaskSpec), SimError> {
    if !(0.0..=1.0).contains(&diff.p_hidden) {
        return Err(SimError::GenerationFailure(format!(
            "p_hidden {} outside [0, 1]",
            diff.p_hidden
        )));
    }
    let tidx = TaskTemplate::ALL
        .iter()
        .position(|t| *t == template)
        .unwrap_or(0) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tidx);
    let xd = 20;
    let yd = 16 + diff.distractors.div_ceil(16) as i32;
    let mut walls = Vec::new();
    for x in 0..xd {
        walls.push((x, 0));
        walls.push((x, yd - 1));
    }
    for y in 1..yd - 1 {
        walls.push((0, y));
        walls.push((xd - 1, y));
    }
    let mut b = Builder {
        aff: AffordanceTable::household(),
        instances: Vec::new(),
        ordinals: BTreeMap::new(),
    };
    let top = yd - 2;
    let fridge = b.add("Fridge", [1, top, 0], [1, 1, 6], None);
    let cabinet = b.add("Cabinet", [2, top, 0], [2, 1, 4], None);
    let c0 = b.add("CounterTop", [4, top, 0], [4, 1, 4], None);
    b.add("Sink", [8, top, 0], [2, 1, 3], None);
    b.add("Faucet", [10, top, 0], [1, 1, 5], None);
    b.add("StoveBurner", [11, top, 0], [1, 1, 4], None);
    let c1 = b.add("CounterTop", [12, top, 0], [4, 1, 4], None);

    let mut counter: Vec<(Cell, String)> = (4..8)
        .map(|x| ((x, top), c0.clone()))
        .chain((12..16).map(|x| ((x, top), c1.clone())))
        .collect();
    counter.shuffle(&mut rng);
    for cat in ["Toaster", "CoffeeMachine", "Microwave"] {
        let (c, p) = counter.pop().expect("counter has room for appliances");
        b.add(cat, [c.0, c.1, 4], [1, 1, 1], Some(&p));
    }

    // free-standing furniture with a one-cell margin, away from the counter aisle
    let mut taken: BTreeSet<Cell> = BTreeSet::new();
    let mut furniture = Vec::new();
    for (cat, size) in [
        ("DiningTable", [2, 2, 3]),
        ("Sofa", [3, 1, 2]),
        ("HousePlant", [1, 1, 3]),
    ] {
        let mut placed = None;
        for _ in 0..200 {
            let x = rng.gen_range(2..xd - 2 - size[0] + 1);
            let y = rng.gen_range(2..top - 2 - size[1] + 1);
            let fits = (x - 1..x + size[0] + 1)
                .all(|cx| (y - 1..y + size[1] + 1).all(|cy| !taken.contains(&(cx, cy))));
            if fits {
                placed = Some((x, y));
                break;
            }
        }
        let (x, y) =
            placed.ok_or_else(|| SimError::GenerationFailure(format!("no room for {cat}")))?;
        for cx in x..x + size[0] {
            for cy in y..y + size[1] {
                taken.insert((cx, cy));
            }
        }
        furniture.push(b.add(cat, [x, y, 0], size, None));
    }
    let table = furniture[0].clone();

    // required items: counter slots first, table as overflow, closed containers when hidden
    let mut hide_slots: Vec<(Voxel, String)> = (1..5)
        .map(|z| ([1, top, z], fridge.clone()))
        .take(3)
        .chain([
            ([2, top, 1], cabinet.clone()),
            ([3, top, 1], cabinet.clone()),
            ([2, top, 2], cabinet.clone()),
        ])
        .collect();
    hide_slots.reverse();
    let mut table_slots: Vec<(Cell, String)> = Vec::new();
    if template != TaskTemplate::Books {
        let o = b
            .instances
            .iter()
            .find(|i| i.id == table)
            .map(|i| i.origin)
            .unwrap_or_default();
        for dx in 0..2 {
            for dy in 0..2 {
                table_slots.push(((o[0] + dx, o[1] + dy), table.clone()));
            }
        }
        table_slots.shuffle(&mut rng);
    }
    let aff = AffordanceTable::default();
    for cat in items(template) {
        // containers for other items stay out in the open: their slots would be boxed in
        let hide =
            diff.p_hidden > 0.0 && rng.gen_bool(diff.p_hidden) && aff.get(cat).receptacle.is_none();
        if hide {
            let pick = rng.gen_range(0..2usize);
            // pick a container, falling back to the other when full
            let owner = if pick == 0 { &fridge } else { &cabinet };
            let k = hide_slots
                .iter()
                .rposition(|(_, p)| p == owner)
                .or_else(|| hide_slots.len().checked_sub(1));
            if let Some(k) = k {
                let (v, p) = hide_slots.remove(k);
                b.add(cat, v, [1, 1, 1], Some(&p));
                continue;
            }
        }
        let (c, p, z) = if let Some((c, p)) = counter.pop() {
            (c, p, 4)
        } else if let Some((c, p)) = table_slots.pop() {
            (c, p, 3)
        } else {
            return Err(SimError::GenerationFailure("no free slot for items".into()));
        };
        b.add(cat, [c.0, c.1, z], [1, 1, 1], Some(&p));
    }

    // floor clutter
    let mut floor: Vec<Cell> = (1..xd - 1)
        .flat_map(|x| (1..top).map(move |y| (x, y)))
        .filter(|c| !taken.contains(c))
        .collect();
    floor.shuffle(&mut rng);
    if floor.len() < diff.distractors as usize + 1 {
        return Err(SimError::GenerationFailure(
            "room too small for distractors".into(),
        ));
    }
    for k in 0..diff.distractors as usize {
        let cat = DISTRACTORS[rng.gen_range(0..DISTRACTORS.len())];
        let c = floor[k + 1];
        b.add(cat, [c.0, c.1, 0], [1, 1, 1], None);
    }
    let start = floor[0];
    let heading = Heading::ALL[rng.gen_range(0..4)];
    let scene = SceneSpec {
        dims: [xd, yd],
        walls,
        instances: b.instances,
        agent: Pose::new(start, heading),
    };
    Ok((scene, TaskSpec::from_template(template)))
}

/// Seeded scene plus task and oracle reference length.
pub fn generate_scene(
    template: TaskTemplate,
    seed: u64,
    diff: Difficulty,
) -> Result<GeneratedEpisode, SimError> {
    // dense clutter can wall off an item; re-layout with derived seeds
    let mut last = None;
    for attempt in 0..LAYOUT_ATTEMPTS {
        let s = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (scene, task) = layout(template, s, diff)?;
        match crate::exec::oracle_length(&scene, &task) {
            Ok(reference_length) => {
                return Ok(GeneratedEpisode {
                    scene,
                    task,
                    reference_length,
                })
            }
            Err(e) => last = Some(e),
        }
    }
    Err(SimError::GenerationFailure(format!(
        "oracle failed on {template} seed {seed}: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

const LAYOUT_ATTEMPTS: u64 = 8;

/// Fixed kitchen where the target bowl already holds its only allowed item:
/// the agent is asked to put the apple in the bowl. The bowl's capacity is a
/// scene override, so it is not visible to the agent before it tries.
pub fn receptacle_full_episode() -> Result<GeneratedEpisode, SimError> {
    let (xd, yd) = (10, 8);
    let mut walls = Vec::new();
    for x in 0..xd {
        walls.push((x, 0));
        walls.push((x, yd - 1));
    }
    for y in 1..yd - 1 {
        walls.push((0, y));
        walls.push((xd - 1, y));
    }
    let mut b = Builder {
        aff: AffordanceTable::household(),
        instances: Vec::new(),
        ordinals: BTreeMap::new(),
    };
    let counter = b.add("CounterTop", [2, 6, 0], [5, 1, 4], None);
    let bowl = b.add("Bowl", [3, 6, 4], [1, 1, 1], Some(&counter));
    b.instances.last_mut().expect("bowl").capacity = Some(1);
    b.add("Tomato", [3, 6, 5], [1, 1, 1], Some(&bowl));
    b.add("Apple", [5, 6, 4], [1, 1, 1], Some(&counter));
    let scene = SceneSpec {
        dims: [xd, yd],
        walls,
        instances: b.instances,
        agent: Pose::new((4, 3), Heading::North),
    };
    let task = TaskSpec {
        name: "ReceptacleFull".into(),
        conditions: vec![GoalCondition::placed("Apple", "Bowl", 1)],
    };
    let reference_length = crate::exec::oracle_length(&scene, &task)
        .map_err(|e| SimError::GenerationFailure(e.to_string()))?;
    Ok(GeneratedEpisode {
        scene,
        task,
        reference_length,
    })
}
