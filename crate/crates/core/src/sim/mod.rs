//! Deterministic household simulator: scene state, action semantics,
//! raycast observations, goal checking, metrics and scene generation.

mod env;
mod generate;
mod metrics;
mod scene;

use thiserror::Error;

pub use env::{
    Action, ActionResult, Detection, FailureReason, Manipulation, NoiseConfig, Observation,
    Primitive, Sim, BAND,
};
pub use generate::{generate_scene, layout, receptacle_full_episode, Difficulty, GeneratedEpisode};
pub use metrics::{check_goal_conditions, plw, plw_ratio, GoalCount, MetricsReport};
pub use scene::{GoalCondition, InstanceSpec, SceneSpec, TaskSpec, TaskTemplate};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    Spec(String),
    #[error("unknown task template {0}")]
    UnknownTemplate(String),
    #[error("scene generation failed: {0}")]
    GenerationFailure(String),
}
