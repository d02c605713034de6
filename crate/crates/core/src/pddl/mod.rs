//! Typed ADL subset of PDDL: parsing, serialization, grounding and state semantics.
//!
//! Supported: `:adl :strips :typing :conditional-effects :action-costs`,
//! negative literals, `forall` in preconditions and effects, `when` in effects,
//! the built-in `=` predicate, and integer action costs. Anything else is a
//! hard error.

mod eval;
mod ground;
mod model;
mod parse;
pub mod sexpr;
mod write;

pub use eval::{apply, holds, Binding};
pub use ground::{
    ground, ground_with, AtomId, AtomSet, CondEffect, GroundOptions, GroundedAction, GroundedTask,
    DEFAULT_GROUNDING_CAP,
};
pub use model::{
    ActionSchema, CategoryHierarchy, DomainModel, Formula, GroundAtom, PredicateDecl, ProblemModel,
    Requirement, SymState, Term, ROOT_CATEGORY,
};
pub use parse::{parse_domain, parse_problem};
pub use write::{write_domain, write_problem};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PddlError {
    #[error("syntax error at {line}:{column}: expected {expected}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
    },
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unsupported requirement `{0}`")]
    UnsupportedRequirement(String),
    #[error("object `{object}` is not a `{expected}`")]
    TypeMismatch { object: String, expected: String },
    #[error("predicate `{pred}` expects {expected} arguments, got {found}")]
    ArityMismatch {
        pred: String,
        expected: usize,
        found: usize,
    },
    #[error("unbound variable `?{0}`")]
    UnboundVariable(String),
    #[error("duplicate declaration of {0}")]
    Duplicate(String),
    #[error("category hierarchy cycle through `{0}`")]
    CyclicCategory(String),
    #[error("domain mismatch: problem targets `{found}`, domain is `{expected}`")]
    DomainMismatch { expected: String, found: String },
    #[error("grounding produced more than {cap} actions")]
    GroundingExplosion { cap: usize },
    #[error("precondition violated: {}", .0.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" "))]
    PreconditionViolated(Vec<String>),
}
