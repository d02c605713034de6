use std::collections::BTreeSet;

use super::model::{
    canonical, ActionSchema, CategoryHierarchy, DomainModel, Formula, GroundAtom, PredicateDecl,
    ProblemModel, Requirement, Term, ROOT_CATEGORY,
};
use super::sexpr::{read_one, syntax, Pos, SExpr};
use super::PddlError;

pub fn parse_domain(text: &str) -> Result<DomainModel, PddlError> {
    let top = read_one(text)?;
    let items = expect_list(&top, "(define (domain ...) ...)")?;
    expect_keyword(items.first(), top.pos(), "define")?;
    let header = items
        .get(1)
        .and_then(SExpr::as_list)
        .ok_or_else(|| syntax(top.pos(), "(domain <name>)"))?;
    expect_keyword(header.first(), top.pos(), "domain")?;
    let name = atom_at(header, 1, top.pos(), "domain name")?.to_string();

    let mut domain = DomainModel {
        name,
        requirements: BTreeSet::new(),
        categories: CategoryHierarchy::new(),
        predicates: Vec::new(),
        actions: Vec::new(),
    };
    let mut pending_actions = Vec::new();
    for section in &items[2..] {
        let body = expect_list(section, "domain section")?;
        let head = body
            .first()
            .and_then(SExpr::as_atom)
            .ok_or_else(|| syntax(section.pos(), "section keyword"))?
            .to_ascii_lowercase();
        match head.as_str() {
            ":requirements" => {
                for r in &body[1..] {
                    let kw = r
                        .as_atom()
                        .ok_or_else(|| syntax(r.pos(), "requirement flag"))?;
                    let req = Requirement::from_keyword(kw)
                        .ok_or_else(|| PddlError::UnsupportedRequirement(kw.to_string()))?;
                    domain.requirements.insert(req);
                }
            }
            ":types" => {
                for (names, parent) in typed_list(&body[1..], false)? {
                    for n in names {
                        domain.categories.declare(&n, &parent)?;
                    }
                }
            }
            ":predicates" => {
                for p in &body[1..] {
                    let decl = expect_list(p, "predicate declaration")?;
                    let pname = atom_at(decl, 0, p.pos(), "predicate name")?.to_string();
                    if domain.predicate(&pname).is_some() {
                        return Err(PddlError::Duplicate(format!("predicate {pname}")));
                    }
                    let mut params = Vec::new();
                    for (vars, cat) in typed_list(&decl[1..], true)? {
                        params.extend(vars.iter().map(|_| cat.clone()));
                    }
                    domain.predicates.push(PredicateDecl {
                        name: pname,
                        params,
                    });
                }
            }
            ":functions" => {
                // only the action-cost accumulator is accepted
                for f in &body[1..] {
                    match f {
                        SExpr::List(l, _) if l.len() == 1 && l[0].is_keyword("total-cost") => {}
                        SExpr::Atom(a, _) if a == "-" => {}
                        SExpr::Atom(a, _) if a.eq_ignore_ascii_case("number") => {}
                        _ => return Err(syntax(f.pos(), "(total-cost)")),
                    }
                }
            }
            ":action" | "action" => pending_actions.push(section),
            _ => return Err(syntax(section.pos(), "supported domain section")),
        }
    }
    for section in pending_actions {
        let action = parse_action(section, &domain)?;
        if domain.action(&action.name).is_some() {
            return Err(PddlError::Duplicate(format!("action {}", action.name)));
        }
        domain.actions.push(action);
    }
    Ok(domain)
}

fn parse_action(section: &SExpr, domain: &DomainModel) -> Result<ActionSchema, PddlError> {
    let body = expect_list(section, "action")?;
    let name = atom_at(body, 1, section.pos(), "action name")?.to_string();
    let mut params = Vec::new();
    let mut precondition = Formula::truth();
    let mut effect = Formula::truth();
    let mut cost = 1;
    let mut i = 2;
    while i < body.len() {
        let key = body[i]
            .as_atom()
            .ok_or_else(|| syntax(body[i].pos(), "action field keyword"))?
            .to_ascii_lowercase();
        let value = body
            .get(i + 1)
            .ok_or_else(|| syntax(body[i].pos(), "value after action field"))?;
        match key.as_str() {
            ":parameters" => {
                let list = expect_list(value, "parameter list")?;
                for (vars, cat) in typed_list(list, true)? {
                    for v in vars {
                        params.push((v, cat.clone()));
                    }
                }
            }
            ":precondition" => precondition = parse_formula(value, false)?,
            ":effect" => {
                let (f, c) = parse_effect(value)?;
                effect = f;
                if let Some(c) = c {
                    cost = c;
                }
            }
            _ => {
                return Err(syntax(
                    body[i].pos(),
                    ":parameters, :precondition or :effect",
                ))
            }
        }
        i += 2;
    }
    for (_, cat) in &params {
        check_category(domain, cat)?;
    }
    let mut scope: Vec<String> = params.iter().map(|(v, _)| v.clone()).collect();
    check_formula(domain, &precondition, &mut scope)?;
    check_formula(domain, &effect, &mut scope)?;
    Ok(ActionSchema {
        name,
        params,
        precondition,
        effect,
        cost,
    })
}

/// Parses an effect, pulling a top-level `(increase (total-cost) N)` out as the cost.
fn parse_effect(e: &SExpr) -> Result<(Formula, Option<u32>), PddlError> {
    if let Some(c) = parse_increase(e)? {
        return Ok((Formula::truth(), Some(c)));
    }
    if e.head().is_some_and(|h| h.eq_ignore_ascii_case("and")) {
        let items = e.as_list().unwrap_or_default();
        let mut parts = Vec::new();
        let mut cost = None;
        for item in &items[1..] {
            match parse_increase(item)? {
                Some(c) => cost = Some(c),
                None => parts.push(parse_formula(item, true)?),
            }
        }
        return Ok((Formula::And(parts), cost));
    }
    Ok((parse_formula(e, true)?, None))
}

fn parse_increase(e: &SExpr) -> Result<Option<u32>, PddlError> {
    if !e.head().is_some_and(|h| h.eq_ignore_ascii_case("increase")) {
        return Ok(None);
    }
    let items = e.as_list().unwrap_or_default();
    let ok_target = items
        .get(1)
        .and_then(SExpr::as_list)
        .is_some_and(|l| l.len() == 1 && l[0].is_keyword("total-cost"));
    if items.len() != 3 || !ok_target {
        return Err(syntax(e.pos(), "(increase (total-cost) <n>)"));
    }
    let n = items[2]
        .as_atom()
        .and_then(|a| a.parse::<u32>().ok())
        .ok_or_else(|| syntax(items[2].pos(), "nonnegative integer cost"))?;
    Ok(Some(n))
}

fn parse_formula(e: &SExpr, in_effect: bool) -> Result<Formula, PddlError> {
    let items = expect_list(e, "formula")?;
    let head = match items.first() {
        None => return Ok(Formula::truth()),
        Some(h) => h.as_atom().ok_or_else(|| syntax(h.pos(), "formula head"))?,
    };
    let lower = head.to_ascii_lowercase();
    match lower.as_str() {
        "and" => Ok(Formula::And(
            items[1..]
                .iter()
                .map(|i| parse_formula(i, in_effect))
                .collect::<Result<_, _>>()?,
        )),
        "not" => {
            if items.len() != 2 {
                return Err(syntax(e.pos(), "(not <formula>)"));
            }
            let inner = parse_formula(&items[1], in_effect)?;
            if !matches!(inner, Formula::Atom { .. } | Formula::Equal(..)) {
                return Err(syntax(items[1].pos(), "atom or equality under `not`"));
            }
            Ok(Formula::not(inner))
        }
        "forall" => {
            if items.len() != 3 {
                return Err(syntax(e.pos(), "(forall (<vars>) <formula>)"));
            }
            let vars = typed_list(expect_list(&items[1], "forall variables")?, true)?;
            let mut body = parse_formula(&items[2], in_effect)?;
            let flat: Vec<(String, String)> = vars
                .into_iter()
                .flat_map(|(vs, c)| vs.into_iter().map(move |v| (v, c.clone())))
                .collect();
            if flat.is_empty() {
                return Err(syntax(items[1].pos(), "at least one variable"));
            }
            for (v, c) in flat.into_iter().rev() {
                body = Formula::Forall {
                    var: v,
                    category: c,
                    body: Box::new(body),
                };
            }
            Ok(body)
        }
        "when" if in_effect => {
            if items.len() != 3 {
                return Err(syntax(e.pos(), "(when <condition> <effect>)"));
            }
            let cond = parse_formula(&items[1], false)?;
            if !is_literal_conjunction(&cond) {
                return Err(syntax(
                    items[1].pos(),
                    "literal conjunction in `when` condition",
                ));
            }
            let effect = parse_formula(&items[2], true)?;
            if contains_when(&effect) {
                return Err(syntax(items[2].pos(), "effect without nested `when`"));
            }
            Ok(Formula::When {
                cond: Box::new(cond),
                effect: Box::new(effect),
            })
        }
        "=" => {
            if items.len() != 3 {
                return Err(syntax(e.pos(), "(= <term> <term>)"));
            }
            Ok(Formula::Equal(term(&items[1])?, term(&items[2])?))
        }
        "or" | "imply" | "exists" | "when" | "increase" | "decrease" | "assign" => Err(syntax(
            items[0].pos(),
            format!("supported construct, found `{head}`"),
        )),
        _ => Ok(Formula::Atom {
            pred: head.to_string(),
            terms: items[1..].iter().map(term).collect::<Result<_, _>>()?,
        }),
    }
}

fn term(e: &SExpr) -> Result<Term, PddlError> {
    let a = e.as_atom().ok_or_else(|| syntax(e.pos(), "term"))?;
    Ok(match a.strip_prefix('?') {
        Some(v) if !v.is_empty() => Term::Var(v.to_string()),
        Some(_) => return Err(syntax(e.pos(), "variable name")),
        None => Term::Obj(a.to_string()),
    })
}

fn check_category(domain: &DomainModel, cat: &str) -> Result<(), PddlError> {
    if domain.categories.contains(cat) {
        Ok(())
    } else {
        Err(PddlError::UnknownCategory(cat.to_string()))
    }
}

/// Checks predicate declarations, arities, categories and variable scoping.
fn check_formula(
    domain: &DomainModel,
    f: &Formula,
    scope: &mut Vec<String>,
) -> Result<(), PddlError> {
    match f {
        Formula::Atom { pred, terms } => {
            let decl = domain
                .predicate(pred)
                .ok_or_else(|| PddlError::UnknownPredicate(pred.clone()))?;
            if decl.params.len() != terms.len() {
                return Err(PddlError::ArityMismatch {
                    pred: pred.clone(),
                    expected: decl.params.len(),
                    found: terms.len(),
                });
            }
            terms.iter().try_for_each(|t| check_term(t, scope))
        }
        Formula::Equal(a, b) => {
            check_term(a, scope)?;
            check_term(b, scope)
        }
        Formula::Not(inner) => check_formula(domain, inner, scope),
        Formula::And(parts) => parts
            .iter()
            .try_for_each(|p| check_formula(domain, p, scope)),
        Formula::Forall {
            var,
            category,
            body,
        } => {
            check_category(domain, category)?;
            scope.push(var.clone());
            let r = check_formula(domain, body, scope);
            scope.pop();
            r
        }
        Formula::When { cond, effect } => {
            check_formula(domain, cond, scope)?;
            check_formula(domain, effect, scope)
        }
    }
}

fn is_literal_conjunction(f: &Formula) -> bool {
    match f {
        Formula::Atom { .. } | Formula::Equal(..) | Formula::Not(_) => true,
        Formula::And(p) => p.iter().all(is_literal_conjunction),
        _ => false,
    }
}

fn contains_when(f: &Formula) -> bool {
    match f {
        Formula::When { .. } => true,
        Formula::And(p) => p.iter().any(contains_when),
        Formula::Forall { body, .. } | Formula::Not(body) => contains_when(body),
        _ => false,
    }
}

fn check_term(t: &Term, scope: &[String]) -> Result<(), PddlError> {
    match t {
        Term::Var(v) if !scope.contains(v) => Err(PddlError::UnboundVariable(v.clone())),
        _ => Ok(()),
    }
}

pub fn parse_problem(text: &str, domain: &DomainModel) -> Result<ProblemModel, PddlError> {
    let top = read_one(text)?;
    let items = expect_list(&top, "(define (problem ...) ...)")?;
    expect_keyword(items.first(), top.pos(), "define")?;
    let header = items
        .get(1)
        .and_then(SExpr::as_list)
        .ok_or_else(|| syntax(top.pos(), "(problem <name>)"))?;
    expect_keyword(header.first(), top.pos(), "problem")?;
    let name = atom_at(header, 1, top.pos(), "problem name")?.to_string();

    let mut problem = ProblemModel {
        name,
        domain: domain.name.clone(),
        objects: Vec::new(),
        init: BTreeSet::new(),
        goal: Formula::truth(),
    };
    let mut init_exprs = Vec::new();
    let mut goal_expr = None;
    for section in &items[2..] {
        let body = expect_list(section, "problem section")?;
        let head = body
            .first()
            .and_then(SExpr::as_atom)
            .ok_or_else(|| syntax(section.pos(), "section keyword"))?
            .to_ascii_lowercase();
        match head.as_str() {
            ":domain" => {
                let d = atom_at(body, 1, section.pos(), "domain name")?;
                if !d.eq_ignore_ascii_case(&domain.name) {
                    return Err(PddlError::DomainMismatch {
                        expected: domain.name.clone(),
                        found: d.to_string(),
                    });
                }
                problem.domain = d.to_string();
            }
            ":objects" => {
                for (names, cat) in typed_list(&body[1..], false)? {
                    if !domain.categories.contains(&cat) {
                        return Err(PddlError::TypeMismatch {
                            object: names.first().cloned().unwrap_or_default(),
                            expected: cat,
                        });
                    }
                    for n in names {
                        if problem.category_of(&n).is_some() {
                            return Err(PddlError::Duplicate(format!("object {n}")));
                        }
                        problem.objects.push((n, canonical(&cat).to_string()));
                    }
                }
            }
            ":init" => init_exprs.extend(body[1..].iter()),
            ":goal" => {
                let g = body
                    .get(1)
                    .ok_or_else(|| syntax(section.pos(), "goal formula"))?;
                goal_expr = Some(g);
            }
            ":metric" => {}
            _ => return Err(syntax(section.pos(), "supported problem section")),
        }
    }
    for e in init_exprs {
        // `(= (total-cost) 0)` initialises the cost accumulator
        if e.head() == Some("=") {
            continue;
        }
        let f = parse_formula(e, false)?;
        let atom = match f {
            Formula::Atom { pred, terms } => {
                let args = terms
                    .into_iter()
                    .map(|t| match t {
                        Term::Obj(o) => Ok(o),
                        Term::Var(v) => Err(PddlError::UnboundVariable(v)),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                GroundAtom { pred, args }
            }
            _ => return Err(syntax(e.pos(), "ground atom in :init")),
        };
        check_ground_atom(domain, &problem, &atom)?;
        problem.init.insert(atom);
    }
    if let Some(g) = goal_expr {
        let goal = parse_formula(g, false)?;
        let mut scope = Vec::new();
        check_formula(domain, &goal, &mut scope)?;
        check_objects(&goal, &problem)?;
        problem.goal = goal;
    }
    Ok(problem)
}

pub(crate) fn check_ground_atom(
    domain: &DomainModel,
    problem: &ProblemModel,
    atom: &GroundAtom,
) -> Result<(), PddlError> {
    let decl = domain
        .predicate(&atom.pred)
        .ok_or_else(|| PddlError::UnknownPredicate(atom.pred.clone()))?;
    if decl.params.len() != atom.args.len() {
        return Err(PddlError::ArityMismatch {
            pred: atom.pred.clone(),
            expected: decl.params.len(),
            found: atom.args.len(),
        });
    }
    for (arg, expected) in atom.args.iter().zip(&decl.params) {
        let cat = problem
            .category_of(arg)
            .ok_or_else(|| PddlError::UnknownObject(arg.clone()))?;
        if !domain.categories.is_subtype(cat, expected) {
            return Err(PddlError::TypeMismatch {
                object: arg.clone(),
                expected: expected.clone(),
            });
        }
    }
    Ok(())
}

fn check_objects(f: &Formula, problem: &ProblemModel) -> Result<(), PddlError> {
    let check = |t: &Term| match t {
        Term::Obj(o) if problem.category_of(o).is_none() => {
            Err(PddlError::UnknownObject(o.clone()))
        }
        _ => Ok(()),
    };
    match f {
        Formula::Atom { terms, .. } => terms.iter().try_for_each(check),
        Formula::Equal(a, b) => {
            check(a)?;
            check(b)
        }
        Formula::Not(b) | Formula::Forall { body: b, .. } => check_objects(b, problem),
        Formula::And(p) => p.iter().try_for_each(|x| check_objects(x, problem)),
        Formula::When { cond, effect } => {
            check_objects(cond, problem)?;
            check_objects(effect, problem)
        }
    }
}

/// Parses `a b - T c - U d` style lists. Untyped trailing names get the root
/// category. With `vars`, every name must start with `?` (stripped).
fn typed_list(items: &[SExpr], vars: bool) -> Result<Vec<(Vec<String>, String)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let tok = items[i]
            .as_atom()
            .ok_or_else(|| syntax(items[i].pos(), "name"))?;
        if tok == "-" {
            let cat = items
                .get(i + 1)
                .and_then(SExpr::as_atom)
                .ok_or_else(|| syntax(items[i].pos(), "category after `-`"))?;
            if pending.is_empty() {
                return Err(syntax(items[i].pos(), "name before `-`"));
            }
            out.push((std::mem::take(&mut pending), canonical(cat).to_string()));
            i += 2;
            continue;
        }
        let name = if vars {
            match tok.strip_prefix('?') {
                Some(v) if !v.is_empty() => v.to_string(),
                _ => return Err(syntax(items[i].pos(), "variable starting with `?`")),
            }
        } else {
            tok.to_string()
        };
        pending.push(name);
        i += 1;
    }
    if !pending.is_empty() {
        out.push((pending, ROOT_CATEGORY.to_string()));
    }
    Ok(out)
}

fn expect_list<'a>(e: &'a SExpr, what: &str) -> Result<&'a [SExpr], PddlError> {
    e.as_list().ok_or_else(|| syntax(e.pos(), what))
}

fn expect_keyword(e: Option<&SExpr>, fallback: Pos, kw: &str) -> Result<(), PddlError> {
    match e {
        Some(x) if x.is_keyword(kw) => Ok(()),
        Some(x) => Err(syntax(x.pos(), format!("`{kw}`"))),
        None => Err(syntax(fallback, format!("`{kw}`"))),
    }
}

fn atom_at<'a>(items: &'a [SExpr], i: usize, pos: Pos, what: &str) -> Result<&'a str, PddlError> {
    match items.get(i) {
        Some(e) => e.as_atom().ok_or_else(|| syntax(e.pos(), what)),
        None => Err(syntax(pos, what)),
    }
}
