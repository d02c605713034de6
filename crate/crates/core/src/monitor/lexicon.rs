use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affordance::AffordanceTable;

use super::{Subgoal, SubgoalPredicate};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("no lexicon pattern matched the dialog")]
    EmptyResult,
    #[error("invalid lexicon: {0}")]
    Invalid(String),
}

/// Subgoal template; `{X}` and `{Y}` are replaced by matched nouns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalTemplate {
    pub patient: String,
    pub predicate: SubgoalPredicate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    /// Lowercase phrase; `{X}` / `{Y}` match a known noun.
    pub pattern: String,
    pub subgoals: Vec<SubgoalTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: Vec<LexiconEntry>,
    /// Extra noun phrases mapped to categories, on top of category names.
    #[serde(default)]
    pub nouns: BTreeMap<String, String>,
}

const ARTICLES: [&str; 4] = ["the", "a", "an", "some"];

/// Lowercase, strip punctuation and articles, collapse whitespace.
pub fn normalize(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == ' ' {
                c
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

fn camel_words(cat: &str) -> String {
    let mut out = String::new();
    for (i, c) in cat.chars().enumerate() {
        if c.is_uppercase() && i > 0 {
            out.push(' ');
        }
        out.extend(c.to_lowercase());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Lit(Vec<String>),
    Slot(char),
}

fn pieces(pattern: &str) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut lit = Vec::new();
    for w in normalize_pattern(pattern).split_whitespace() {
        if w.len() == 3 && w.starts_with('{') && w.ends_with('}') {
            if !lit.is_empty() {
                out.push(Piece::Lit(std::mem::take(&mut lit)));
            }
            out.push(Piece::Slot(
                w.chars().nth(1).unwrap_or('X').to_ascii_uppercase(),
            ));
        } else {
            lit.push(w.to_string());
        }
    }
    if !lit.is_empty() {
        out.push(Piece::Lit(lit));
    }
    out
}

fn normalize_pattern(p: &str) -> String {
    p.to_lowercase()
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

impl Lexicon {
    /// Built-in phrase table.
    pub fn default_lexicon() -> Self {
        use SubgoalPredicate::*;
        let t = |p: &str, pred: SubgoalPredicate| SubgoalTemplate {
            patient: p.to_string(),
            predicate: pred,
            destination: None,
        };
        let put = || SubgoalTemplate {
            patient: "{X}".into(),
            predicate: IsPlacedTo,
            destination: Some("{Y}".into()),
        };
        let e = |pattern: &str, subgoals: Vec<SubgoalTemplate>| LexiconEntry {
            pattern: pattern.to_string(),
            subgoals,
        };
        let entries = vec![
            e("make coffee", vec![t("Mug", SimbotIsFilledWithCoffee)]),
            e("with coffee", vec![t("Mug", SimbotIsFilledWithCoffee)]),
            e(
                "toast",
                vec![t("Bread", IsSliced), t("BreadSlice", IsCooked)],
            ),
            e("water plant", vec![t("HousePlant", IsFilledWithLiquid)]),
            e("put {X} on {Y}", vec![put()]),
            e("put {X} in {Y}", vec![put()]),
            e("place {X} on {Y}", vec![put()]),
            e("place {X} in {Y}", vec![put()]),
            e("move {X} to {Y}", vec![put()]),
            e("clean {X}", vec![t("{X}", IsClean)]),
            e("rinse {X}", vec![t("{X}", IsClean)]),
            e("wash {X}", vec![t("{X}", IsClean)]),
            e("slice {X}", vec![t("{X}", IsSliced)]),
            e("cut {X}", vec![t("{X}", IsSliced)]),
            e("cook {X}", vec![t("{X}", IsCooked)]),
            e("boil {X}", vec![t("{X}", IsCooked)]),
            e("fry {X}", vec![t("{X}", IsCooked)]),
            e("fill {X} with water", vec![t("{X}", IsFilledWithLiquid)]),
            e("pick up {X}", vec![t("{X}", IsPickedUp)]),
            e("turn on {X}", vec![t("{X}", IsToggled)]),
            e("empty {X}", vec![t("{X}", IsEmptied)]),
        ];
        let nouns = [
            ("plant", "HousePlant"),
            ("counter", "CounterTop"),
            ("countertop", "CounterTop"),
            ("table", "DiningTable"),
            ("coffee maker", "CoffeeMachine"),
            ("stove", "StoveBurner"),
            ("burner", "StoveBurner"),
            ("slice of bread", "BreadSlice"),
            ("slice of tomato", "TomatoSlice"),
            ("slice of lettuce", "LettuceSlice"),
            ("slice of potato", "PotatoSlice"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        Lexicon { entries, nouns }
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        serde_json::from_str(text).map_err(|e| LexiconError::Invalid(e.to_string()))
    }

    /// Noun phrases (normalized word lists) to categories: category names,
    /// their spaced and plural forms, and the configured extras.
    fn noun_table(&self, aff: &AffordanceTable) -> Vec<(Vec<String>, String)> {
        let mut m: BTreeMap<String, String> = BTreeMap::new();
        for c in aff.categories() {
            let spaced = camel_words(c);
            for form in [c.to_lowercase(), spaced.clone()] {
                m.insert(format!("{form}es"), c.to_string());
                m.insert(format!("{form}s"), c.to_string());
                m.insert(form, c.to_string());
            }
        }
        for (k, v) in &self.nouns {
            m.insert(normalize(k), v.clone());
        }
        let mut v: Vec<(Vec<String>, String)> = m
            .into_iter()
            .map(|(k, c)| (k.split_whitespace().map(str::to_string).collect(), c))
            .collect();
        // longest phrase first
        v.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        v
    }

    /// Ordered subgoals for the dialog: matches within a turn in text order
    /// (earlier entries win at equal positions), duplicates dropped.
    pub fn parse_subgoals(
        &self,
        turns: &[String],
        aff: &AffordanceTable,
    ) -> Result<Vec<Subgoal>, LexiconError> {
        let nouns = self.noun_table(aff);
        let compiled: Vec<Vec<Piece>> = self.entries.iter().map(|e| pieces(&e.pattern)).collect();
        let mut out: Vec<Subgoal> = Vec::new();
        for turn in turns {
            let words: Vec<String> = normalize(turn)
                .split_whitespace()
                .map(str::to_string)
                .collect();
            let mut hits: Vec<(usize, usize, usize, BTreeMap<char, String>)> = Vec::new();
            for (ei, pat) in compiled.iter().enumerate() {
                for start in 0..words.len() {
                    if let Some((end, slots)) = match_at(pat, &words, start, &nouns) {
                        hits.push((start, ei, end, slots));
                    }
                }
            }
            hits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut covered_until = 0;
            for (start, ei, end, slots) in hits {
                if start < covered_until {
                    continue;
                }
                covered_until = end;
                for t in &self.entries[ei].subgoals {
                    let fill = |s: &str| {
                        let mut s = s.to_string();
                        for (k, v) in &slots {
                            s = s.replace(&format!("{{{k}}}"), v);
                        }
                        s
                    };
                    let sg = Subgoal::new(
                        fill(&t.patient),
                        t.predicate,
                        t.destination.as_deref().map(fill),
                    )
                    .map_err(|e| LexiconError::Invalid(e.to_string()))?;
                    if !out.contains(&sg) {
                        out.push(sg);
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(LexiconError::EmptyResult);
        }
        Ok(out)
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::default_lexicon()
    }
}

fn match_at(
    pat: &[Piece],
    words: &[String],
    start: usize,
    nouns: &[(Vec<String>, String)],
) -> Option<(usize, BTreeMap<char, String>)> {
    let mut i = start;
    let mut slots = BTreeMap::new();
    for p in pat {
        match p {
            Piece::Lit(lit) => {
                if words.len() < i + lit.len() || words[i..i + lit.len()] != lit[..] {
                    return None;
                }
                i += lit.len();
            }
            Piece::Slot(name) => {
                let (phrase, cat) = nouns.iter().find(|(ph, _)| {
                    words.len() >= i + ph.len() && words[i..i + ph.len()] == ph[..]
                })?;
                slots.insert(*name, cat.clone());
                i += phrase.len();
            }
        }
    }
    Some((i, slots))
}
