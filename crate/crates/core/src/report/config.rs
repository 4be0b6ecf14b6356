//! Run configuration: a single JSON document.

use super::ReportError;
use crate::data::{FeatureSchema, Provenance, DEFAULT_MIN_GROUP_SIZE};
use crate::hash::{canonical_json, fnv1a64};
use crate::inconsistency::{AbstainRule, BinningScheme, RashomonRule};
use crate::metrics::DEFAULT_THRESHOLD;
use crate::pipeline::{plan_for_path, DEFAULT_MIN_ROWS};
use crate::synth::{BiasInjectorSpec, PopulationSpec};
use crate::universe::{DimensionName, UniverseSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub population: PopulationSpec,
    /// Applied in order to the generated population.
    #[serde(default)]
    pub biases: Vec<BiasInjectorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Paths are relative to the configuration file.
    pub subjects: String,
    pub events: String,
    pub schema: FeatureSchema,
    pub provenance: Provenance,
}

impl SynthSection {
    /// Schema of the generated dataset after every injector has run.
    pub fn schema(&self) -> Result<FeatureSchema, crate::synth::SynthError> {
        let mut schema = self.population.schema()?;
        for b in &self.biases {
            if let BiasInjectorSpec::Missingness { feature, .. } = b {
                if let Some(j) = schema.index_of(feature) {
                    schema.features[j].missing_allowed = true;
                }
            }
        }
        Ok(schema)
    }
}

fn default_fraction() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldoutSection {
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub stratify_by: Option<String>,
}

impl Default for HoldoutSection {
    fn default() -> Self {
        Self { fraction: default_fraction(), stratify_by: None }
    }
}

fn default_min_group() -> usize {
    DEFAULT_MIN_GROUP_SIZE
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessSection {
    #[serde(default = "default_min_group")]
    pub min_group_size: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Tolerance for the calibration/balance impossibility diagnostic.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    0.01
}

impl Default for FairnessSection {
    fn default() -> Self {
        Self { min_group_size: DEFAULT_MIN_GROUP_SIZE, threshold: DEFAULT_THRESHOLD, tolerance: default_tolerance() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSort {
    #[default]
    ScoreAsc,
    PathCanonical,
}

fn default_top_range() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSection {
    /// Subjects that always get a curve.
    #[serde(default)]
    pub subjects: Vec<String>,
    /// Also draw the subjects with the widest score ranges.
    #[serde(default = "default_top_range")]
    pub top_range: usize,
    #[serde(default)]
    pub sort: CurveSort,
}

impl Default for CurvesSection {
    fn default() -> Self {
        Self { subjects: Vec::new(), top_range: default_top_range(), sort: CurveSort::ScoreAsc }
    }
}

fn default_budgets() -> Vec<f64> {
    vec![0.1, 0.2]
}

fn default_schemes() -> Vec<BinningScheme> {
    let three = BinningScheme::equal_width("three_level", 3, Some(vec!["low".into(), "medium".into(), "high".into()]));
    let five = BinningScheme::equal_width(
        "five_level",
        5,
        Some(["very_low", "low", "average", "high", "very_high"].map(String::from).to_vec()),
    );
    vec![three.expect("valid scheme"), five.expect("valid scheme")]
}

fn default_intended_use() -> String {
    "Audit of individual-level predictive inconsistency; not for decisions about individuals.".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    /// Worker threads; never affects outputs.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub holdout: HoldoutSection,
    pub universe: UniverseSpec,
    #[serde(default)]
    pub rashomon: RashomonRule,
    #[serde(default = "default_schemes")]
    pub binning: Vec<BinningScheme>,
    #[serde(default = "default_budgets")]
    pub lift_budgets: Vec<f64>,
    #[serde(default)]
    pub fairness: FairnessSection,
    /// Decision threshold for ambiguity/discrepancy.
    #[serde(default = "default_threshold")]
    pub decision_threshold: f64,
    #[serde(default)]
    pub abstain: AbstainRule,
    /// Choices of the deployed path; defaults to the first admissible path.
    #[serde(default)]
    pub baseline: Option<BTreeMap<DimensionName, String>>,
    #[serde(default = "default_min_rows")]
    pub min_rows: usize,
    #[serde(default)]
    pub curves: CurvesSection,
    #[serde(default = "default_intended_use")]
    pub intended_use: String,
}

fn default_min_rows() -> usize {
    DEFAULT_MIN_ROWS
}

fn invalid(msg: impl Into<String>) -> ReportError {
    ReportError::ConfigInvalid(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io { path: path.display().to_string(), source: e })?;
        Self::from_json(&text)
    }

    pub fn scheme(&self, name: &str) -> Option<&BinningScheme> {
        self.binning.iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.synth.is_some() == self.data.is_some() {
            return Err(invalid("exactly one of `synth` and `data` must be present"));
        }
        if !(self.holdout.fraction > 0.0 && self.holdout.fraction < 1.0) {
            return Err(invalid(format!("holdout fraction {} not in (0, 1)", self.holdout.fraction)));
        }
        for t in [self.decision_threshold, self.fairness.threshold] {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid(format!("threshold {t} not in (0, 1)")));
            }
        }
        if self.lift_budgets.iter().any(|&k| !(k > 0.0 && k <= 1.0)) {
            return Err(invalid("lift budgets must lie in (0, 1]"));
        }
        if self.binning.is_empty() {
            return Err(invalid("at least one binning scheme is required"));
        }
        let mut names = std::collections::HashSet::new();
        for s in &self.binning {
            s.validate().map_err(|e| invalid(e.to_string()))?;
            if !names.insert(s.name.as_str()) {
                return Err(invalid(format!("binning scheme `{}` declared twice", s.name)));
            }
        }
        if !known_metric(&self.rashomon.metric, &self.lift_budgets) {
            return Err(invalid(format!("unknown Rashomon metric `{}`", self.rashomon.metric)));
        }
        if self.min_rows < 2 {
            return Err(invalid("min_rows must be >= 2"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers must be >= 1"));
        }
        let paths = self.universe.enumerate_paths().map_err(|e| invalid(e.to_string()))?;
        if let Some(d) = self.universe.dimension(DimensionName::Binning) {
            for o in &d.options {
                let scheme = o.parameters.get("scheme").and_then(Json::as_str).unwrap_or_default();
                if self.scheme(scheme).is_none() {
                    return Err(invalid(format!("binning option `{}` references unknown scheme `{scheme}`", o.name)));
                }
            }
        }
        // every option payload must decode; one path per option suffices
        for d in &self.universe.dimensions {
            for o in &d.options {
                let path = first_path_with(&paths, d.name, &o.name);
                if let Some(p) = path {
                    plan_for_path(&self.universe, p).map_err(|e| invalid(e.to_string()))?;
                }
            }
        }
        if let Some(b) = &self.baseline {
            self.universe.path_from_choices(b).map_err(|e| invalid(format!("baseline: {e}")))?;
        }
        Ok(())
    }

    /// Canonical form of everything that can affect outputs (`workers`
    /// excluded).
    pub fn canonical(&self) -> Json {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Json::Object(m) = &mut v {
            m.remove("workers");
        }
        v
    }

    pub fn content_hash(&self) -> u64 {
        fnv1a64(canonical_json(&self.canonical()).as_bytes())
    }
}

fn first_path_with<'a>(paths: &'a [crate::universe::PathConfig], dim: DimensionName, option: &str) -> Option<&'a crate::universe::PathConfig> {
    paths.iter().find(|p| p.choice(dim) == Some(option))
}

pub fn known_metric(name: &str, budgets: &[f64]) -> bool {
    match name {
        "auc" | "brier" | "ece" | "gap_tpr" | "gap_fpr" | "gap_balance_positive" | "gap_balance_negative" | "gap_ece" => true,
        _ => name
            .strip_prefix("lift@")
            .and_then(|k| k.parse::<f64>().ok())
            .is_some_and(|k| budgets.iter().any(|b| (b - k).abs() < 1e-12)),
    }
}
