//! Binary outcome labels from event histories.

use super::LabeledMatrix;
use crate::data::{Dataset, Degree, EventKind, EventRecord, Jurisdiction};
use crate::synth::years_to_days;
use serde::{Deserialize, Serialize};

/// `y = 1` iff some event of a listed kind, degree and jurisdiction falls in
/// `(anchor_day, anchor_day + window_days]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OutcomeInput")]
pub struct OutcomeDefinition {
    pub failure_events: Vec<EventKind>,
    pub degree_filter: Vec<Degree>,
    pub jurisdiction_filter: Vec<Jurisdiction>,
    pub window_days: i64,
}

/// Accepted payload: `window_days` or `window_years` (exactly one);
/// omitted filters mean "any".
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeInput {
    failure_events: Vec<EventKind>,
    #[serde(default)]
    degree_filter: Option<Vec<Degree>>,
    #[serde(default)]
    jurisdiction_filter: Option<Vec<Jurisdiction>>,
    #[serde(default)]
    window_days: Option<i64>,
    #[serde(default)]
    window_years: Option<f64>,
}

impl TryFrom<OutcomeInput> for OutcomeDefinition {
    type Error = String;

    fn try_from(raw: OutcomeInput) -> Result<Self, String> {
        let window_days = match (raw.window_days, raw.window_years) {
            (Some(d), None) => d,
            (None, Some(y)) if y.is_finite() => years_to_days(y),
            (None, None) => return Err("outcome needs window_days or window_years".into()),
            _ => return Err("give exactly one of window_days and window_years".into()),
        };
        let def = OutcomeDefinition {
            failure_events: raw.failure_events,
            degree_filter: raw.degree_filter.unwrap_or_else(|| Degree::ALL.to_vec()),
            jurisdiction_filter: raw.jurisdiction_filter.unwrap_or_else(|| Jurisdiction::ALL.to_vec()),
            window_days,
        };
        def.validate()?;
        Ok(def)
    }
}

impl OutcomeDefinition {
    pub fn new(failure_events: Vec<EventKind>, window_days: i64) -> Self {
        Self {
            failure_events,
            degree_filter: Degree::ALL.to_vec(),
            jurisdiction_filter: Jurisdiction::ALL.to_vec(),
            window_days,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.window_days < 0 {
            return Err(format!("window_days {} is negative", self.window_days));
        }
        if self.failure_events.is_empty() {
            return Err("failure_events is empty".into());
        }
        Ok(())
    }

    pub fn matches(&self, e: &EventRecord, anchor_day: i64) -> bool {
        e.day > anchor_day
            && e.day <= anchor_day + self.window_days
            && self.failure_events.contains(&e.kind)
            && self.degree_filter.contains(&e.degree)
            && self.jurisdiction_filter.contains(&e.jurisdiction)
    }
}

/// Labels only; the design matrix has no columns yet.
pub fn derive_outcome(d: &Dataset, def: &OutcomeDefinition) -> LabeledMatrix {
    let y = d
        .subjects
        .iter()
        .map(|s| u8::from(s.events.iter().any(|e| def.matches(e, s.anchor_day))))
        .collect();
    LabeledMatrix {
        rows: d.subjects.iter().map(|s| s.subject_id.clone()).collect(),
        columns: Vec::new(),
        x: Vec::new(),
        y,
        encoding: Vec::new(),
    }
}
