use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The closed set of predicates a subgoal can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubgoalPredicate {
    #[serde(rename = "isCooked")]
    IsCooked,
    #[serde(rename = "isClean")]
    IsClean,
    #[serde(rename = "isPickedUp")]
    IsPickedUp,
    #[serde(rename = "isFilledWithLiquid")]
    IsFilledWithLiquid,
    #[serde(rename = "isEmptied")]
    IsEmptied,
    #[serde(rename = "isSliced")]
    IsSliced,
    #[serde(rename = "simbotIsFilledWithCoffee")]
    SimbotIsFilledWithCoffee,
    #[serde(rename = "isPlacedTo")]
    IsPlacedTo,
    #[serde(rename = "isToggled")]
    IsToggled,
}

impl SubgoalPredicate {
    pub const ALL: [SubgoalPredicate; 9] = [
        SubgoalPredicate::IsCooked,
        SubgoalPredicate::IsClean,
        SubgoalPredicate::IsPickedUp,
        SubgoalPredicate::IsFilledWithLiquid,
        SubgoalPredicate::IsEmptied,
        SubgoalPredicate::IsSliced,
        SubgoalPredicate::SimbotIsFilledWithCoffee,
        SubgoalPredicate::IsPlacedTo,
        SubgoalPredicate::IsToggled,
    ];

    /// PDDL predicate symbol.
    pub fn symbol(self) -> &'static str {
        match self {
            SubgoalPredicate::IsCooked => "isCooked",
            SubgoalPredicate::IsClean => "isClean",
            SubgoalPredicate::IsPickedUp => "isPickedUp",
            SubgoalPredicate::IsFilledWithLiquid => "isFilledWithLiquid",
            SubgoalPredicate::IsEmptied => "isEmptied",
            SubgoalPredicate::IsSliced => "isSliced",
            SubgoalPredicate::SimbotIsFilledWithCoffee => "simbotIsFilledWithCoffee",
            SubgoalPredicate::IsPlacedTo => "isPlacedTo",
            SubgoalPredicate::IsToggled => "isToggled",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.symbol().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for SubgoalPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubgoalError {
    #[error("isPlacedTo requires a destination")]
    MissingDestination,
    #[error("only isPlacedTo takes a destination, got one for {0}")]
    UnexpectedDestination(SubgoalPredicate),
    #[error("unknown subgoal predicate `{0}`")]
    UnknownPredicate(String),
}

/// (patient, predicate, destination) over object categories.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "SubgoalRepr", into = "SubgoalRepr")]
pub struct Subgoal {
    patient: String,
    predicate: SubgoalPredicate,
    destination: Option<String>,
}

impl Subgoal {
    pub fn new(
        patient: impl Into<String>,
        predicate: SubgoalPredicate,
        destination: Option<String>,
    ) -> Result<Self, SubgoalError> {
        match (predicate, &destination) {
            (SubgoalPredicate::IsPlacedTo, None) => Err(SubgoalError::MissingDestination),
            (p, Some(_)) if p != SubgoalPredicate::IsPlacedTo => {
                Err(SubgoalError::UnexpectedDestination(p))
            }
            _ => Ok(Subgoal {
                patient: patient.into(),
                predicate,
                destination,
            }),
        }
    }

    /// Shorthand for subgoals without a destination.
    pub fn unary(patient: &str, predicate: SubgoalPredicate) -> Self {
        Subgoal::new(patient, predicate, None).expect("unary predicate")
    }

    pub fn placed(patient: &str, destination: &str) -> Self {
        Subgoal::new(
            patient,
            SubgoalPredicate::IsPlacedTo,
            Some(destination.to_string()),
        )
        .expect("isPlacedTo with destination")
    }

    pub fn patient(&self) -> &str {
        &self.patient
    }

    pub fn predicate(&self) -> SubgoalPredicate {
        self.predicate
    }

    pub fn destination(&self) -> Option<&str> {
        self.destination.as_deref()
    }
}

impl fmt::Display for Subgoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.destination {
            Some(d) => write!(f, "({}, {}, {})", self.patient, self.predicate, d),
            None => write!(f, "({}, {})", self.patient, self.predicate),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SubgoalRepr {
    patient: String,
    predicate: SubgoalPredicate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    destination: Option<String>,
}

impl TryFrom<SubgoalRepr> for Subgoal {
    type Error = SubgoalError;
    fn try_from(r: SubgoalRepr) -> Result<Self, Self::Error> {
        Subgoal::new(r.patient, r.predicate, r.destination)
    }
}

impl From<Subgoal> for SubgoalRepr {
    fn from(s: Subgoal) -> Self {
        SubgoalRepr {
            patient: s.patient,
            predicate: s.predicate,
            destination: s.destination,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn destination_rule() {
        assert_eq!(
            Subgoal::new("Mug", SubgoalPredicate::IsPlacedTo, None),
            Err(SubgoalError::MissingDestination)
        );
        assert!(Subgoal::new("Mug", SubgoalPredicate::IsClean, Some("Sink".into())).is_err());
        assert!(Subgoal::new("Mug", SubgoalPredicate::IsPlacedTo, Some("Sink".into())).is_ok());
    }

    #[test]
    fn json_shape() {
        let s = Subgoal::placed("BreadSlice", "Plate");
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(
            j,
            r#"{"patient":"BreadSlice","predicate":"isPlacedTo","destination":"Plate"}"#
        );
        let bad: Result<Subgoal, _> =
            serde_json::from_str(r#"{"patient":"Mug","predicate":"isPlacedTo"}"#);
        assert!(bad.is_err());
    }
}
