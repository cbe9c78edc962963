//! Redexes and step labels.

use crate::lang::{Ident, RedexPath, Site};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }

    /// Rule-name suffix, `a` or `r`.
    pub fn suffix(self) -> char {
        match self {
            Direction::Forward => 'a',
            Direction::Reverse => 'r',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Identifier,
    Skip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleFamily {
    Destructive,
    Constructive,
    Conditional,
    Loop,
    Block,
    Declaration,
    Removal,
    Call,
    Sequence,
    Parallel,
}

impl RuleFamily {
    pub fn letter(self) -> char {
        match self {
            RuleFamily::Destructive => 'D',
            RuleFamily::Constructive => 'C',
            RuleFamily::Conditional => 'I',
            RuleFamily::Loop => 'W',
            RuleFamily::Block => 'B',
            RuleFamily::Declaration => 'L',
            RuleFamily::Removal => 'H',
            RuleFamily::Call => 'G',
            RuleFamily::Sequence => 'S',
            RuleFamily::Parallel => 'P',
        }
    }
}

/// An enabled transition: where it is and what kind of rule applies.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Redex {
    pub path: RedexPath,
    pub kind: StepKind,
    pub family: RuleFamily,
    /// Rule name when it follows from the program alone, otherwise the
    /// candidates, e.g. `W1a-W4a`.
    pub rule: String,
    /// Site of the statement the redex belongs to; `None` for `;`/`par`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<Site>,
}

impl Redex {
    pub fn is_skip(&self) -> bool {
        self.kind == StepKind::Skip
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaAction {
    Push,
    Pop,
}

/// One record written to or taken from δ.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeltaOp {
    pub op: DeltaAction,
    pub stack: String,
    pub id: String,
    /// Integer or boolean payload; copy records are summarised by size.
    pub value: String,
}

impl DeltaOp {
    pub fn new(op: DeltaAction, stack: &str, id: Ident, value: impl fmt::Display) -> Self {
        DeltaOp { op, stack: stack.to_string(), id: id.to_string(), value: value.to_string() }
    }
}

/// One transition of a run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepLabel {
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_ident")]
    pub id: Option<Ident>,
    pub redex: RedexPath,
    #[serde(default)]
    pub delta_ops: Vec<DeltaOp>,
}

impl StepLabel {
    pub fn is_skip(&self) -> bool {
        self.id.is_none()
    }
}

impl fmt::Display for StepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.id {
            Some(m) => write!(f, "{} [{m}] at {}", self.rule, self.redex),
            None => write!(f, "{} at {}", self.rule, self.redex),
        }
    }
}

mod opt_ident {
    use crate::lang::Ident;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Ident>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(m) => s.collect_str(m),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Ident>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| s.parse().map_err(serde::de::Error::custom)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_json() {
        let l = StepLabel {
            rule: "D1a".into(),
            id: Some(3),
            redex: "/0/L".parse().unwrap(),
            delta_ops: vec![DeltaOp::new(DeltaAction::Push, "X", 3, 1)],
        };
        let j = serde_json::to_string(&l).unwrap();
        assert_eq!(
            j,
            r#"{"rule":"D1a","id":"3","redex":"/0/L","delta_ops":[{"op":"push","stack":"X","id":"3","value":"1"}]}"#
        );
        assert_eq!(serde_json::from_str::<StepLabel>(&j).unwrap(), l);
        let s = StepLabel { rule: "S2a".into(), id: None, redex: RedexPath::default(), delta_ops: vec![] };
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"rule":"S2a","redex":"/","delta_ops":[]}"#);
        assert_eq!(serde_json::from_str::<StepLabel>(&j).unwrap(), s);
    }
}
