use serde::{Deserialize, Serialize};

use crate::affordance::AffordanceTable;
use crate::monitor::satisfied_count;
use crate::planner::Belief;

use super::{SimError, TaskSpec};

/// Satisfied and required goal-condition counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GoalCount {
    pub satisfied: u32,
    pub total: u32,
}

impl GoalCount {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.total as f64
        }
    }

    pub fn success(&self) -> bool {
        self.satisfied == self.total
    }
}

/// Per condition, counts satisfying oracle instances capped at the required
/// count.
pub fn check_goal_conditions(
    task: &TaskSpec,
    oracle: &Belief,
    aff: &AffordanceTable,
) -> Result<GoalCount, SimError> {
    let mut out = GoalCount::default();
    for c in &task.conditions {
        if c.count == 0 {
            return Err(SimError::Spec(format!(
                "condition on {} has zero count",
                c.patient
            )));
        }
        let n = satisfied_count(oracle, &c.subgoal()?, aff) as u32;
        out.satisfied += n.min(c.count);
        out.total += c.count;
    }
    Ok(out)
}

/// Path-length-weighted metric `m * l_star / max(l_hat, l_star)`.
pub fn plw(m: f64, l_hat: u32, l_star: u32) -> f64 {
    let (num, den) = plw_ratio(l_hat, l_star);
    m * num as f64 / den as f64
}

/// The exact weight `l_star / max(l_hat, l_star)` as a fraction.
pub fn plw_ratio(l_hat: u32, l_star: u32) -> (u32, u32) {
    let l_star = l_star.max(1);
    (l_star, l_hat.max(l_star))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub success: bool,
    pub goal_condition_rate: f64,
    pub trajectory_length: u32,
    pub reference_length: u32,
    pub plw_success: f64,
    pub plw_goal_condition_rate: f64,
}

impl MetricsReport {
    pub fn new(goals: GoalCount, l_hat: u32, l_star: u32) -> Self {
        let sr = if goals.success() { 1.0 } else { 0.0 };
        let gc = goals.fraction();
        MetricsReport {
            success: goals.success(),
            goal_condition_rate: gc,
            trajectory_length: l_hat,
            reference_length: l_star,
            plw_success: plw(sr, l_hat, l_star),
            plw_goal_condition_rate: plw(gc, l_hat, l_star),
        }
    }
}
