use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Subgoal;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnnotateError {
    #[error("inconsistent trajectory at step {step}: {reason}")]
    InconsistentTrajectory { step: usize, reason: String },
}

/// One executed step with the oracle state diff and the per-condition
/// satisfaction vector after the step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub action: String,
    #[serde(default)]
    pub added: Vec<String>,
    #[serde(default)]
    pub removed: Vec<String>,
    pub satisfied: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Oracle atoms before the first step.
    #[serde(default)]
    pub initial: BTreeSet<String>,
    pub steps: Vec<TrajectoryStep>,
}

impl TrajectoryRecord {
    /// Replays the diffs, rejecting removals of absent atoms and additions of
    /// present ones. Returns the final state.
    pub fn replay(&self) -> Result<BTreeSet<String>, AnnotateError> {
        let mut state = self.initial.clone();
        for (k, s) in self.steps.iter().enumerate() {
            for a in &s.removed {
                if !state.remove(a) {
                    return Err(AnnotateError::InconsistentTrajectory {
                        step: k,
                        reason: format!("removes absent atom {a}"),
                    });
                }
            }
            for a in &s.added {
                if !state.insert(a.clone()) {
                    return Err(AnnotateError::InconsistentTrajectory {
                        step: k,
                        reason: format!("adds present atom {a}"),
                    });
                }
            }
        }
        Ok(state)
    }
}

/// Labels each goal condition at the first step it holds, in step order.
pub fn annotate_subgoals(
    traj: &TrajectoryRecord,
    conditions: &[Subgoal],
) -> Result<Vec<(usize, Subgoal)>, AnnotateError> {
    traj.replay()?;
    let n = conditions.len();
    let mut first: Vec<Option<usize>> = vec![None; n];
    for (k, s) in traj.steps.iter().enumerate() {
        if s.satisfied.len() != n {
            return Err(AnnotateError::InconsistentTrajectory {
                step: k,
                reason: format!(
                    "{} satisfaction entries for {n} conditions",
                    s.satisfied.len()
                ),
            });
        }
        for (c, &sat) in s.satisfied.iter().enumerate() {
            match (first[c], sat) {
                (None, true) => first[c] = Some(k),
                (Some(_), false) => {
                    return Err(AnnotateError::InconsistentTrajectory {
                        step: k,
                        reason: format!("condition {c} became unsatisfied"),
                    })
                }
                _ => {}
            }
        }
    }
    let mut out: Vec<(usize, Subgoal)> = first
        .into_iter()
        .enumerate()
        .filter_map(|(c, k)| k.map(|k| (k, conditions[c].clone())))
        .collect();
    out.sort_by_key(|(k, _)| *k);
    Ok(out)
}
