//! Subgoal schema, completion checks, trajectory annotation and the
//! rule-based dialog parser.

mod annotate;
mod check;
mod lexicon;
mod status;
mod subgoal;

pub use annotate::{annotate_subgoals, AnnotateError, TrajectoryRecord, TrajectoryStep};
pub use check::{check_completed, instance_satisfies, satisfied_count};
pub use lexicon::{normalize, Lexicon, LexiconEntry, LexiconError, SubgoalTemplate};
pub use status::{parse_subgoal_file, SubgoalEntry, SubgoalState, SubgoalStatus, TransitionError};
pub use subgoal::{Subgoal, SubgoalError, SubgoalPredicate};
