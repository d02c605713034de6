pub mod affordance;
pub mod exec;
pub mod geom;
pub mod monitor;
pub mod nav;
pub mod pddl;
pub mod planner;
pub mod sim;
pub mod world;
