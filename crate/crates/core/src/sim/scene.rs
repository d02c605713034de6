use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geom::{Cell, Pose, Voxel};
use crate::monitor::{Subgoal, SubgoalPredicate};

use super::SimError;

/// One object instance. Geometry is in voxel units (0.25 m): `origin` is the
/// minimum corner, `size` the extent along x, y, z.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: String,
    pub category: String,
    pub origin: Voxel,
    pub size: [i32; 3],
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub states: BTreeMap<String, bool>,
    /// Receptacle the instance sits in or on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Overrides the category's receptacle capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
}

impl InstanceSpec {
    pub fn new(id: &str, category: &str, origin: Voxel, size: [i32; 3]) -> Self {
        InstanceSpec {
            id: id.to_string(),
            category: category.to_string(),
            origin,
            size,
            states: BTreeMap::new(),
            parent: None,
            capacity: None,
        }
    }

    pub fn voxels(&self) -> impl Iterator<Item = Voxel> + '_ {
        let [ox, oy, oz] = self.origin;
        let [sx, sy, sz] = self.size;
        (0..sx).flat_map(move |dx| {
            (0..sy).flat_map(move |dy| (0..sz).map(move |dz| [ox + dx, oy + dy, oz + dz]))
        })
    }
}

/// Static layout plus initial object placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Footprint in cells (x, y).
    pub dims: [i32; 2],
    /// Full-height static columns (walls).
    pub walls: Vec<Cell>,
    pub instances: Vec<InstanceSpec>,
    pub agent: Pose,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Spec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalCondition {
    pub patient: String,
    pub predicate: SubgoalPredicate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<String>,
    #[serde(default = "one")]
    pub count: u32,
}

fn one() -> u32 {
    1
}

impl GoalCondition {
    pub fn new(patient: &str, predicate: SubgoalPredicate, count: u32) -> Self {
        GoalCondition {
            patient: patient.to_string(),
            predicate,
            destination: None,
            count,
        }
    }

    pub fn placed(patient: &str, destination: &str, count: u32) -> Self {
        GoalCondition {
            patient: patient.to_string(),
            predicate: SubgoalPredicate::IsPlacedTo,
            destination: Some(destination.to_string()),
            count,
        }
    }

    pub fn subgoal(&self) -> Result<Subgoal, SimError> {
        Subgoal::new(
            self.patient.clone(),
            self.predicate,
            self.destination.clone(),
        )
        .map_err(|e| SimError::Spec(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskTemplate {
    WaterPlant,
    Coffee,
    Toast,
    Boil,
    PutAll,
    CleanAll,
    Slices,
    Sandwich,
    Salad,
    CookSlice,
    Books,
    FriedEgg,
}

impl TaskTemplate {
    pub const ALL: [TaskTemplate; 12] = [
        TaskTemplate::WaterPlant,
        TaskTemplate::Coffee,
        TaskTemplate::Toast,
        TaskTemplate::Boil,
        TaskTemplate::PutAll,
        TaskTemplate::CleanAll,
        TaskTemplate::Slices,
        TaskTemplate::Sandwich,
        TaskTemplate::Salad,
        TaskTemplate::CookSlice,
        TaskTemplate::Books,
        TaskTemplate::FriedEgg,
    ];

    pub fn conditions(self) -> Vec<GoalCondition> {
        use SubgoalPredicate::*;
        let c = GoalCondition::new;
        let p = GoalCondition::placed;
        match self {
            TaskTemplate::WaterPlant => vec![c("HousePlant", IsFilledWithLiquid, 1)],
            TaskTemplate::Coffee => {
                vec![c("Mug", IsClean, 1), c("Mug", SimbotIsFilledWithCoffee, 1)]
            }
            TaskTemplate::Toast => vec![c("Bread", IsSliced, 1), c("BreadSlice", IsCooked, 1)],
            TaskTemplate::Boil => vec![c("Potato", IsCooked, 1)],
            TaskTemplate::PutAll => vec![p("Pillow", "Sofa", 2)],
            TaskTemplate::CleanAll => vec![c("Plate", IsClean, 2)],
            TaskTemplate::Slices => vec![c("Tomato", IsSliced, 1), p("TomatoSlice", "Plate", 1)],
            TaskTemplate::Sandwich => vec![
                c("Bread", IsSliced, 1),
                c("BreadSlice", IsCooked, 1),
                p("BreadSlice", "Plate", 1),
                c("Lettuce", IsSliced, 1),
                p("LettuceSlice", "Plate", 1),
            ],
            TaskTemplate::Salad => vec![
                c("Lettuce", IsSliced, 1),
                p("LettuceSlice", "Bowl", 1),
                c("Tomato", IsSliced, 1),
                p("TomatoSlice", "Bowl", 1),
            ],
            TaskTemplate::CookSlice => {
                vec![c("Potato", IsSliced, 1), c("PotatoSlice", IsCooked, 1)]
            }
            TaskTemplate::Books => vec![p("Book", "DiningTable", 2)],
            TaskTemplate::FriedEgg => vec![c("Egg", IsCooked, 1)],
        }
    }
}

impl fmt::Display for TaskTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for TaskTemplate {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        TaskTemplate::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| SimError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub conditions: Vec<GoalCondition>,
}

impl TaskSpec {
    pub fn from_template(t: TaskTemplate) -> Self {
        TaskSpec {
            name: t.to_string(),
            conditions: t.conditions(),
        }
    }

    /// Oracle subgoal sequence: each condition repeated `count` times.
    pub fn subgoals(&self) -> Result<Vec<Subgoal>, SimError> {
        let mut out = Vec::new();
        for c in &self.conditions {
            let s = c.subgoal()?;
            for _ in 0..c.count {
                out.push(s.clone());
            }
        }
        Ok(out)
    }
}
