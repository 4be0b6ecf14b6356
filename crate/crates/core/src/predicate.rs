//! Predicates over subject features, group labels and event histories.
//! Used for subpopulation restriction and for coverage filters.

use crate::data::{Dataset, Degree, EventKind, FeatureKind, Jurisdiction, SubjectRecord, Value};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PredicateError {
    #[error("predicate references unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("predicate on feature `{feature}`: {message}")]
    KindMismatch { feature: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CompareOp {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Gt => lhs > rhs,
            CompareOp::Ge => lhs >= rhs,
            CompareOp::Eq => lhs == rhs,
            CompareOp::Ne => lhs != rhs,
        }
    }
}

/// Which part of the event log an event condition looks at, relative to
/// the subject's anchor day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventPeriod {
    /// day <= anchor_day
    #[default]
    Prior,
    /// day > anchor_day
    Post,
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCondition {
    pub kinds: Vec<EventKind>,
    #[serde(default)]
    pub degrees: Option<Vec<Degree>>,
    #[serde(default)]
    pub jurisdictions: Option<Vec<Jurisdiction>>,
    #[serde(default)]
    pub period: EventPeriod,
    #[serde(default = "one")]
    pub min_count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    All,
    GroupIn(Vec<String>),
    /// Numeric comparison; missing values never satisfy it.
    Numeric {
        feature: String,
        op: CompareOp,
        value: f64,
    },
    /// Categorical membership; missing values never satisfy it.
    LevelIn {
        feature: String,
        levels: Vec<String>,
    },
    Events(EventCondition),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    /// Checks every referenced feature against the dataset schema.
    pub fn check(&self, d: &Dataset) -> Result<(), PredicateError> {
        match self {
            Predicate::All | Predicate::GroupIn(_) | Predicate::Events(_) => Ok(()),
            Predicate::Numeric { feature, .. } => {
                let j = d
                    .schema
                    .index_of(feature)
                    .ok_or_else(|| PredicateError::UnknownFeature(feature.clone()))?;
                match d.schema.features[j].kind {
                    FeatureKind::Numeric => Ok(()),
                    _ => Err(PredicateError::KindMismatch {
                        feature: feature.clone(),
                        message: "numeric comparison on categorical feature".into(),
                    }),
                }
            }
            Predicate::LevelIn { feature, levels } => {
                let j = d
                    .schema
                    .index_of(feature)
                    .ok_or_else(|| PredicateError::UnknownFeature(feature.clone()))?;
                let declared = d.schema.features[j].levels().ok_or_else(|| PredicateError::KindMismatch {
                    feature: feature.clone(),
                    message: "level test on numeric feature".into(),
                })?;
                match levels.iter().find(|l| !declared.contains(l)) {
                    Some(l) => Err(PredicateError::KindMismatch {
                        feature: feature.clone(),
                        message: format!("undeclared level `{l}`"),
                    }),
                    None => Ok(()),
                }
            }
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().try_for_each(|p| p.check(d)),
            Predicate::Not(p) => p.check(d),
        }
    }

    /// Evaluates the predicate; call [`Predicate::check`] first.
    pub fn eval(&self, d: &Dataset, s: &SubjectRecord) -> bool {
        match self {
            Predicate::All => true,
            Predicate::GroupIn(groups) => groups.iter().any(|g| *g == s.group),
            Predicate::Numeric { feature, op, value } => {
                match d.feature_value(s, feature) {
                    Some(Value::Numeric(x)) => op.holds(x, *value),
                    _ => false,
                }
            }
            Predicate::LevelIn { feature, levels } => {
                let Some(j) = d.schema.index_of(feature) else {
                    return false;
                };
                match (s.features[j], d.schema.features[j].levels()) {
                    (Value::Level(l), Some(declared)) => levels.contains(&declared[l as usize]),
                    _ => false,
                }
            }
            Predicate::Events(c) => c.count(s) >= c.min_count,
            Predicate::And(ps) => ps.iter().all(|p| p.eval(d, s)),
            Predicate::Or(ps) => ps.iter().any(|p| p.eval(d, s)),
            Predicate::Not(p) => !p.eval(d, s),
        }
    }
}

impl EventCondition {
    pub fn count(&self, s: &SubjectRecord) -> usize {
        s.events
            .iter()
            .filter(|e| {
                let in_period = match self.period {
                    EventPeriod::Prior => e.day <= s.anchor_day,
                    EventPeriod::Post => e.day > s.anchor_day,
                    EventPeriod::Any => true,
                };
                in_period
                    && self.kinds.contains(&e.kind)
                    && self.degrees.as_ref().is_none_or(|ds| ds.contains(&e.degree))
                    && self
                        .jurisdictions
                        .as_ref()
                        .is_none_or(|js| js.contains(&e.jurisdiction))
            })
            .count()
    }
}
