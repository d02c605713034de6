use std::collections::BTreeMap;

use super::ground::{GroundedAction, GroundedTask};
use super::model::{Formula, GroundAtom, SymState, Term};
use super::PddlError;

/// Variable (without `?`) to object name.
pub type Binding = BTreeMap<String, String>;

pub(crate) fn resolve(t: &Term, b: &Binding) -> Result<String, PddlError> {
    match t {
        Term::Obj(o) => Ok(o.clone()),
        Term::Var(v) => b
            .get(v)
            .cloned()
            .ok_or_else(|| PddlError::UnboundVariable(v.clone())),
    }
}

/// Closed-world evaluation. `forall` ranges over the task's objects of the
/// binder's category (and its subcategories).
pub fn holds(
    formula: &Formula,
    state: &SymState,
    binding: &Binding,
    task: &GroundedTask,
) -> Result<bool, PddlError> {
    let mut b = binding.clone();
    eval(formula, state, &mut b, task)
}

fn eval(
    f: &Formula,
    s: &SymState,
    b: &mut Binding,
    task: &GroundedTask,
) -> Result<bool, PddlError> {
    Ok(match f {
        Formula::Atom { pred, terms } => {
            let atom = GroundAtom {
                pred: pred.clone(),
                args: terms
                    .iter()
                    .map(|t| resolve(t, b))
                    .collect::<Result<_, _>>()?,
            };
            s.contains(&atom)
        }
        Formula::Equal(x, y) => resolve(x, b)? == resolve(y, b)?,
        Formula::Not(inner) => !eval(inner, s, b, task)?,
        Formula::And(parts) => {
            for p in parts {
                if !eval(p, s, b, task)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Forall {
            var,
            category,
            body,
        } => {
            let prev = b.get(var).cloned();
            let mut result = true;
            for (o, c) in &task.objects {
                if !task.categories.is_subtype(c, category) {
                    continue;
                }
                b.insert(var.clone(), o.clone());
                match eval(body, s, b, task) {
                    Ok(true) => {}
                    Ok(false) => {
                        result = false;
                        break;
                    }
                    Err(e) => {
                        restore(b, var, prev);
                        return Err(e);
                    }
                }
            }
            restore(b, var, prev);
            result
        }
        // read as an implication outside effects
        Formula::When { cond, effect } => !eval(cond, s, b, task)? || eval(effect, s, b, task)?,
    })
}

fn restore(b: &mut Binding, var: &str, prev: Option<String>) {
    match prev {
        Some(p) => {
            b.insert(var.to_string(), p);
        }
        None => {
            b.remove(var);
        }
    }
}

/// Applies a grounded action. Conditional effects are evaluated against the
/// pre-state, and all deletes precede all adds.
pub fn apply(
    task: &GroundedTask,
    action: &GroundedAction,
    state: &SymState,
) -> Result<SymState, PddlError> {
    let set = task.from_state(state);
    if !task.applicable(action, &set) {
        return Err(PddlError::PreconditionViolated(
            task.failed_preconditions(action, &set),
        ));
    }
    let next = task.successor(action, &set);
    // atoms outside the task's vocabulary pass through untouched
    let mut out = task.to_state(&next);
    out.atoms.extend(
        state
            .atoms
            .iter()
            .filter(|a| task.atom_id(a).is_none())
            .cloned(),
    );
    Ok(out)
}
