use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Subgoal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubgoalStatus {
    Pending,
    InProgress,
    Completed,
    Abandoned,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("illegal subgoal transition {from:?} -> {to:?}")]
pub struct TransitionError {
    pub from: SubgoalStatus,
    pub to: SubgoalStatus,
}

/// Status of one subgoal with the step of its last transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalState {
    pub subgoal: Subgoal,
    pub status: SubgoalStatus,
    pub since: u32,
}

impl SubgoalState {
    pub fn new(subgoal: Subgoal) -> Self {
        SubgoalState {
            subgoal,
            status: SubgoalStatus::Pending,
            since: 0,
        }
    }

    /// Pending -> InProgress -> {Completed, Abandoned}; anything else errors.
    pub fn transition(&mut self, to: SubgoalStatus, step: u32) -> Result<(), TransitionError> {
        use SubgoalStatus::*;
        let ok = matches!(
            (self.status, to),
            (Pending, InProgress) | (InProgress, Completed) | (InProgress, Abandoned)
        );
        if !ok {
            return Err(TransitionError {
                from: self.status,
                to,
            });
        }
        self.status = to;
        self.since = step;
        Ok(())
    }
}

/// Subgoal file entry: the subgoal plus an optional completed marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalEntry {
    #[serde(flatten)]
    pub subgoal: Subgoal,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub completed: bool,
}

pub fn parse_subgoal_file(text: &str) -> Result<Vec<SubgoalEntry>, serde_json::Error> {
    serde_json::from_str(text)
}
