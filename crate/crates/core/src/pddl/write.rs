use std::fmt::Write;

use super::model::{DomainModel, Formula, ProblemModel, Requirement, ROOT_CATEGORY};

pub fn write_domain(d: &DomainModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", d.name);
    let reqs: Vec<Requirement> = d.requirements.iter().copied().collect();
    let costs = d.actions.iter().any(|a| a.cost != 1);
    if !reqs.is_empty() {
        let flags: Vec<&str> = reqs.iter().map(|r| r.keyword()).collect();
        let _ = writeln!(out, "    (:requirements {})", flags.join(" "));
    }
    if !d.categories.is_empty() {
        out.push_str("    (:types\n");
        for (name, parent) in d.categories.entries() {
            let _ = writeln!(out, "        {name} - {parent}");
        }
        out.push_str("    )\n");
    }
    if !d.predicates.is_empty() {
        out.push_str("    (:predicates\n");
        for p in &d.predicates {
            let _ = write!(out, "        ({}", p.name);
            for (i, c) in p.params.iter().enumerate() {
                let _ = write!(out, " ?a{i} - {c}");
            }
            out.push_str(")\n");
        }
        out.push_str("    )\n");
    }
    if costs {
        out.push_str("    (:functions (total-cost) - number)\n");
    }
    for a in &d.actions {
        let _ = writeln!(out, "    (:action {}", a.name);
        let params: Vec<String> = a
            .params
            .iter()
            .map(|(v, c)| format!("?{v} - {c}"))
            .collect();
        let _ = writeln!(out, "        :parameters ({})", params.join(" "));
        let _ = writeln!(out, "        :precondition {}", formula(&a.precondition));
        let mut eff = formula(&a.effect);
        if a.cost != 1 {
            let inc = format!("(increase (total-cost) {})", a.cost);
            eff = match &a.effect {
                Formula::And(parts) => {
                    let mut s: Vec<String> = parts.iter().map(formula).collect();
                    s.push(inc);
                    format!("(and {})", s.join(" "))
                }
                other => format!("(and {} {inc})", formula(other)),
            };
        }
        let _ = writeln!(out, "        :effect {eff}");
        out.push_str("    )\n");
    }
    out.push_str(")\n");
    out
}

pub fn write_problem(p: &ProblemModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", p.name);
    let _ = writeln!(out, "    (:domain {})", p.domain);
    out.push_str("    (:objects\n");
    for (o, c) in &p.objects {
        let c = if c.is_empty() { ROOT_CATEGORY } else { c };
        let _ = writeln!(out, "        {o} - {c}");
    }
    out.push_str("    )\n    (:init\n");
    for atom in &p.init {
        let _ = writeln!(out, "        {atom}");
    }
    out.push_str("    )\n");
    let _ = writeln!(out, "    (:goal {})", formula(&p.goal));
    out.push_str(")\n");
    out
}

fn formula(f: &Formula) -> String {
    match f {
        Formula::Atom { pred, terms } => {
            let mut s = format!("({pred}");
            for t in terms {
                let _ = write!(s, " {t}");
            }
            s.push(')');
            s
        }
        Formula::Not(inner) => format!("(not {})", formula(inner)),
        Formula::And(parts) => {
            let parts: Vec<String> = parts.iter().map(formula).collect();
            if parts.is_empty() {
                "(and)".to_string()
            } else {
                format!("(and {})", parts.join(" "))
            }
        }
        Formula::Forall {
            var,
            category,
            body,
        } => format!("(forall (?{var} - {category}) {})", formula(body)),
        Formula::When { cond, effect } => {
            format!("(when {} {})", formula(cond), formula(effect))
        }
        Formula::Equal(a, b) => format!("(= {a} {b})"),
    }
}
