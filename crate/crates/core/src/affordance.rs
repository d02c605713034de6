//! Per-category affordances shared by the planner (static PDDL facts), the
//! world model (action-effect mirroring) and the simulator (action semantics).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const DEFAULT_CAPACITY: u32 = 3;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Affordance {
    pub pickupable: bool,
    /// Receptacle capacity; `None` when the category holds nothing.
    pub receptacle: Option<u32>,
    /// Large support surface whose contents are not pulled in by pruning.
    pub surface: bool,
    pub openable: bool,
    pub toggleable: bool,
    /// Yield category and count produced by slicing.
    pub sliceable: Option<(String, u32)>,
    pub slicer: bool,
    pub fillable: bool,
    pub cookable: bool,
    pub heater: bool,
    pub stove_burner: bool,
    pub cookware: bool,
    pub coffee_machine: bool,
    pub sink: bool,
    pub faucet: bool,
    pub liquid_target: bool,
    /// May sit on a support surface without being pickupable (counter appliances).
    pub rests_on_surface: bool,
}

impl Affordance {
    /// Static unary predicates of the household domain that hold for this category.
    pub fn static_predicates(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let flags = [
            (self.pickupable, "pickupable"),
            (self.receptacle.is_some(), "receptacle"),
            (self.openable, "openable"),
            (self.toggleable, "toggleable"),
            (self.sliceable.is_some(), "sliceable"),
            (self.slicer, "slicer"),
            (self.fillable, "fillable"),
            (self.cookable, "cookable"),
            (self.heater, "heater"),
            (self.stove_burner, "stoveBurner"),
            (self.cookware, "cookware"),
            (self.coffee_machine, "coffeeMachine"),
            (self.sink, "sink"),
            (self.faucet, "faucet"),
            (self.liquid_target, "liquidTarget"),
        ];
        for (on, name) in flags {
            if on {
                out.push(name);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffordanceTable {
    entries: BTreeMap<String, Affordance>,
    #[serde(skip)]
    none: Affordance,
}

impl AffordanceTable {
    pub fn new(entries: BTreeMap<String, Affordance>) -> Self {
        AffordanceTable {
            entries,
            none: Affordance::default(),
        }
    }

    /// Affordances of `category`; unknown categories afford nothing.
    pub fn get(&self, category: &str) -> &Affordance {
        self.entries.get(category).unwrap_or(&self.none)
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn capacity(&self, category: &str) -> Option<u32> {
        self.get(category).receptacle
    }

    pub fn yield_of(&self, category: &str) -> Option<(&str, u32)> {
        self.get(category)
            .sliceable
            .as_ref()
            .map(|(c, n)| (c.as_str(), *n))
    }

    /// Category whose slicing yields `category`, if any.
    pub fn sliced_from(&self, category: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, a)| a.sliceable.as_ref().is_some_and(|(c, _)| c == category))
            .map(|(k, _)| k.as_str())
    }

    /// Whether an instance of `a` can rest on or in an instance of `b`.
    pub fn can_rest_on(&self, a: &str, b: &str) -> bool {
        let (fa, fb) = (self.get(a), self.get(b));
        if a == b || fb.receptacle.is_none() {
            return false;
        }
        fa.pickupable || (fa.rests_on_surface && fb.surface)
    }

    /// Built-in household table.
    pub fn household() -> Self {
        let mut e: BTreeMap<String, Affordance> = BTreeMap::new();
        let mut put = |names: &[&str], f: &dyn Fn(&mut Affordance)| {
            for n in names {
                f(e.entry(n.to_string()).or_default());
            }
        };
        let item = |a: &mut Affordance| a.pickupable = true;
        put(
            &[
                "Bread",
                "BreadSlice",
                "Tomato",
                "TomatoSlice",
                "Lettuce",
                "LettuceSlice",
                "Potato",
                "PotatoSlice",
                "Apple",
                "AppleSlice",
                "Egg",
                "Mug",
                "Cup",
                "Plate",
                "Bowl",
                "Pan",
                "Pot",
                "Knife",
                "Fork",
                "Spoon",
                "Spatula",
                "Book",
                "Pillow",
                "Vase",
                "Statue",
                "RemoteControl",
                "Newspaper",
                "Candle",
                "Box",
                "Laptop",
                "KeyChain",
                "CellPhone",
                "Watch",
                "Pen",
                "Pencil",
                "CreditCard",
                "SoapBar",
                "Towel",
                "Bottle",
            ],
            &item,
        );
        put(
            &["BreadSlice", "PotatoSlice", "Potato", "Egg", "TomatoSlice"],
            &|a| a.cookable = true,
        );
        for (src, dst, n) in [
            ("Bread", "BreadSlice", 3),
            ("Tomato", "TomatoSlice", 3),
            ("Lettuce", "LettuceSlice", 3),
            ("Potato", "PotatoSlice", 2),
            ("Apple", "AppleSlice", 2),
        ] {
            put(&[src], &|a| a.sliceable = Some((dst.to_string(), n)));
        }
        put(&["Knife"], &|a| a.slicer = true);
        put(
            &["Mug", "Cup", "Bowl", "Pot", "HousePlant", "Bottle"],
            &|a| a.fillable = true,
        );
        put(&["Sink", "HousePlant"], &|a| a.liquid_target = true);
        put(&["Plate", "Bowl", "Pan", "Pot", "Box"], &|a| {
            a.receptacle = Some(DEFAULT_CAPACITY)
        });
        put(&["Pan", "Pot"], &|a| a.cookware = true);
        put(&["Toaster"], &|a| {
            a.receptacle = Some(2);
            a.heater = true;
            a.toggleable = true;
            a.rests_on_surface = true;
        });
        put(&["Microwave"], &|a| {
            a.receptacle = Some(DEFAULT_CAPACITY);
            a.heater = true;
            a.toggleable = true;
            a.rests_on_surface = true;
        });
        put(&["CoffeeMachine"], &|a| {
            a.receptacle = Some(1);
            a.coffee_machine = true;
            a.toggleable = true;
            a.rests_on_surface = true;
        });
        put(&["StoveBurner"], &|a| {
            a.receptacle = Some(1);
            a.stove_burner = true;
            a.toggleable = true;
        });
        put(&["Sink"], &|a| {
            a.receptacle = Some(DEFAULT_CAPACITY);
            a.sink = true;
        });
        put(&["Faucet"], &|a| {
            a.faucet = true;
            a.toggleable = true;
        });
        put(&["Fridge", "Cabinet"], &|a| {
            a.receptacle = Some(DEFAULT_CAPACITY);
            a.openable = true;
        });
        put(&["CounterTop", "DiningTable", "Sofa", "Bed"], &|a| {
            a.receptacle = Some(DEFAULT_CAPACITY);
            a.surface = true;
        });
        put(&["HousePlant"], &|_| {});
        AffordanceTable::new(e)
    }
}

impl Default for AffordanceTable {
    fn default() -> Self {
        AffordanceTable::household()
    }
}
