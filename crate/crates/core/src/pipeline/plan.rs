//! Typed stage settings decoded from a path's option payloads.

use super::{ImputeMethod, OutcomeDefinition, PipelineError, ResampleMethod, SelectionMethod};
use crate::data::EventKind;
use crate::models::ModelSpec;
use crate::predicate::Predicate;
use crate::universe::{DimensionName, PathConfig, UniverseSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

/// Dimensions that can change the prepared training/holdout matrices.
pub const PREP_DIMENSIONS: [DimensionName; 6] = [
    DimensionName::OutcomeDefinition,
    DimensionName::Imputation,
    DimensionName::RareGrouping,
    DimensionName::Resampling,
    DimensionName::Subpopulation,
    DimensionName::VariableSelection,
];

/// Dimensions that can change a path's scores (everything but binning).
pub const MODEL_DIMENSIONS: [DimensionName; 8] = [
    DimensionName::OutcomeDefinition,
    DimensionName::Imputation,
    DimensionName::RareGrouping,
    DimensionName::Resampling,
    DimensionName::Subpopulation,
    DimensionName::VariableSelection,
    DimensionName::ModelFamily,
    DimensionName::ModelSeed,
];

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResampleSpec {
    #[serde(default)]
    pub method: ResampleMethod,
    #[serde(default = "half")]
    pub target_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepPlan {
    pub outcome: OutcomeDefinition,
    pub subpopulation: Predicate,
    pub imputation: ImputeMethod,
    pub rare_threshold: f64,
    pub resampling: ResampleSpec,
    pub selection: SelectionMethod,
}

impl Default for PrepPlan {
    fn default() -> Self {
        Self {
            outcome: OutcomeDefinition::new(vec![EventKind::Conviction], 730),
            subpopulation: Predicate::All,
            imputation: ImputeMethod::MeanMode,
            rare_threshold: 0.0,
            resampling: ResampleSpec { method: ResampleMethod::None, target_rate: 0.5 },
            selection: SelectionMethod::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    pub prep: PrepPlan,
    pub model: ModelSpec,
    /// Name of the binning scheme, when the path declares one.
    pub binning: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubpopulationPayload {
    #[serde(default = "all")]
    predicate: Predicate,
}
fn all() -> Predicate {
    Predicate::All
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImputationPayload {
    method: ImputeMethod,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RarePayload {
    threshold: f64,
}

#[derive(Deserialize)]
struct SeedPayload {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BinningPayload {
    scheme: String,
}

/// Decodes every chosen option of `path`. Undeclared dimensions take the
/// [`PrepPlan`] defaults and an unpenalized logistic model.
pub fn plan_for_path(universe: &UniverseSpec, path: &PathConfig) -> Result<PathPlan, PipelineError> {
    let mut plan = PathPlan { prep: PrepPlan::default(), model: ModelSpec::Logistic { l2: 0.0 }, binning: None };
    for (dim, option) in &path.choices {
        let params = universe
            .dimension(*dim)
            .and_then(|d| d.options.iter().find(|o| &o.name == option))
            .map(|o| Json::Object(o.parameters.clone().into_iter().collect()))
            .ok_or_else(|| invalid(*dim, option, "option not declared".into()))?;
        match dim {
            DimensionName::OutcomeDefinition => plan.prep.outcome = decode(*dim, option, params)?,
            DimensionName::Subpopulation => {
                plan.prep.subpopulation = decode::<SubpopulationPayload>(*dim, option, params)?.predicate
            }
            DimensionName::Imputation => plan.prep.imputation = decode::<ImputationPayload>(*dim, option, params)?.method,
            DimensionName::RareGrouping => {
                let t = decode::<RarePayload>(*dim, option, params)?.threshold;
                if !(0.0..1.0).contains(&t) {
                    return Err(invalid(*dim, option, format!("threshold {t} not in [0, 1)")));
                }
                plan.prep.rare_threshold = t;
            }
            DimensionName::Resampling => {
                let r: ResampleSpec = decode(*dim, option, params)?;
                if r.method != ResampleMethod::None && !(r.target_rate > 0.0 && r.target_rate < 1.0) {
                    return Err(invalid(*dim, option, format!("target_rate {} not in (0, 1)", r.target_rate)));
                }
                plan.prep.resampling = r;
            }
            DimensionName::VariableSelection => plan.prep.selection = decode(*dim, option, params)?,
            DimensionName::ModelFamily => {
                let spec: ModelSpec = decode(*dim, option, params)?;
                spec.validate().map_err(|e| invalid(*dim, option, e.to_string()))?;
                plan.model = spec;
            }
            // The option name alone distinguishes seeds; parameters are
            // descriptive only.
            DimensionName::ModelSeed => {
                let _: SeedPayload = decode(*dim, option, params)?;
            }
            DimensionName::Binning => plan.binning = Some(decode::<BinningPayload>(*dim, option, params)?.scheme),
        }
    }
    Ok(plan)
}

fn invalid(dim: DimensionName, option: &str, message: String) -> PipelineError {
    PipelineError::InvalidOption { dimension: dim.as_str().into(), option: option.into(), message }
}

fn decode<T: DeserializeOwned>(dim: DimensionName, option: &str, params: Json) -> Result<T, PipelineError> {
    serde_json::from_value(params).map_err(|e| invalid(dim, option, e.to_string()))
}
