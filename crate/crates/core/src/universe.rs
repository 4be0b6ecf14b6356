//! Forking-path universe: declared dimensions, exclusion constraints and
//! canonical enumeration of admissible paths.

use crate::hash::{canonical_json, fnv1a64};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use thiserror::Error;

/// Above this many admissible paths validation emits a warning.
pub const SOFT_PATH_LIMIT: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum UniverseError {
    #[error("no admissible path: every combination is excluded")]
    NoAdmissiblePath,
    #[error("constraint {constraint} references unknown {what} `{name}`")]
    UnknownReference {
        constraint: usize,
        what: &'static str,
        name: String,
    },
    #[error("invalid universe: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionName {
    OutcomeDefinition,
    Imputation,
    RareGrouping,
    Resampling,
    Subpopulation,
    VariableSelection,
    ModelFamily,
    ModelSeed,
    Binning,
}

impl DimensionName {
    pub const ALL: [DimensionName; 9] = [
        DimensionName::OutcomeDefinition,
        DimensionName::Imputation,
        DimensionName::RareGrouping,
        DimensionName::Resampling,
        DimensionName::Subpopulation,
        DimensionName::VariableSelection,
        DimensionName::ModelFamily,
        DimensionName::ModelSeed,
        DimensionName::Binning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DimensionName::OutcomeDefinition => "outcome_definition",
            DimensionName::Imputation => "imputation",
            DimensionName::RareGrouping => "rare_grouping",
            DimensionName::Resampling => "resampling",
            DimensionName::Subpopulation => "subpopulation",
            DimensionName::VariableSelection => "variable_selection",
            DimensionName::ModelFamily => "model_family",
            DimensionName::ModelSeed => "model_seed",
            DimensionName::Binning => "binning",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

impl fmt::Display for DimensionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationaleSource {
    LocalLaw,
    DomainKnowledge,
    DataDriven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reasonableness {
    pub rationale: String,
    pub provenance: RationaleSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForkOption {
    pub name: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, Json>,
    pub reasonableness: Reasonableness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub name: DimensionName,
    pub options: Vec<ForkOption>,
}

impl Dimension {
    pub fn option_index(&self, name: &str) -> Option<usize> {
        self.options.iter().position(|o| o.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn names(&self) -> Vec<&str> {
        match self {
            OneOrMany::One(s) => vec![s.as_str()],
            OneOrMany::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

/// Excludes every path whose choice lies in the listed option set for
/// every listed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub exclude: BTreeMap<DimensionName, OneOrMany>,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniverseSpec {
    pub dimensions: Vec<Dimension>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathConfig {
    pub path_id: u64,
    /// Option index per declared dimension, in declaration order.
    pub option_indices: Vec<usize>,
    pub choices: Vec<(DimensionName, String)>,
}

impl PathConfig {
    pub fn choice(&self, dim: DimensionName) -> Option<&str> {
        self.choices.iter().find(|(d, _)| *d == dim).map(|(_, o)| o.as_str())
    }

    /// Identifier of the sub-path restricted to `dims` (in declared order);
    /// equals `path_id` when `dims` covers every declared dimension.
    pub fn prefix_id(&self, dims: &[DimensionName]) -> u64 {
        choices_id(self.choices.iter().filter(|(d, _)| dims.contains(d)))
    }
}

fn choices_id<'a>(choices: impl Iterator<Item = &'a (DimensionName, String)>) -> u64 {
    let arr: Vec<Json> = choices
        .map(|(d, o)| Json::Array(vec![Json::String(d.as_str().into()), Json::String(o.clone())]))
        .collect();
    fnv1a64(canonical_json(&Json::Array(arr)).as_bytes())
}

/// Canonical identifier of a full choice vector.
pub fn path_id_of(choices: &[(DimensionName, String)]) -> u64 {
    choices_id(choices.iter())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniverseReport {
    pub raw_paths: u128,
    pub admissible_paths: usize,
    pub empty_rationale: Vec<(DimensionName, String)>,
    pub warnings: Vec<String>,
}

/// Constraint compiled to per-dimension option masks (`None` = any).
struct CompiledConstraint(Vec<Option<Vec<bool>>>);

impl CompiledConstraint {
    fn matches(&self, indices: &[usize]) -> bool {
        self.0
            .iter()
            .zip(indices)
            .all(|(mask, &i)| mask.as_ref().is_none_or(|m| m[i]))
    }
}

impl UniverseSpec {
    fn check_structure(&self) -> Result<(), UniverseError> {
        if self.dimensions.is_empty() {
            return Err(UniverseError::Invalid("no dimensions declared".into()));
        }
        let mut seen = HashSet::new();
        for d in &self.dimensions {
            if !seen.insert(d.name) {
                return Err(UniverseError::Invalid(format!("dimension `{}` declared twice", d.name)));
            }
            if d.options.is_empty() {
                return Err(UniverseError::Invalid(format!("dimension `{}` has no options", d.name)));
            }
            let mut names = HashSet::new();
            for o in &d.options {
                if !names.insert(o.name.as_str()) {
                    return Err(UniverseError::Invalid(format!(
                        "dimension `{}` repeats option `{}`",
                        d.name, o.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn compile(&self) -> Result<Vec<CompiledConstraint>, UniverseError> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                let mut masks: Vec<Option<Vec<bool>>> = vec![None; self.dimensions.len()];
                for (dim, opts) in &c.exclude {
                    let di = self
                        .dimensions
                        .iter()
                        .position(|d| d.name == *dim)
                        .ok_or_else(|| UniverseError::UnknownReference {
                            constraint: ci,
                            what: "dimension",
                            name: dim.as_str().into(),
                        })?;
                    let d = &self.dimensions[di];
                    let mut mask = vec![false; d.options.len()];
                    for name in opts.names() {
                        let oi = d.option_index(name).ok_or_else(|| UniverseError::UnknownReference {
                            constraint: ci,
                            what: "option",
                            name: format!("{}={}", dim, name),
                        })?;
                        mask[oi] = true;
                    }
                    masks[di] = Some(mask);
                }
                Ok(CompiledConstraint(masks))
            })
            .collect()
    }

    pub fn dimension(&self, name: DimensionName) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn raw_path_count(&self) -> u128 {
        self.dimensions
            .iter()
            .map(|d| d.options.len() as u128)
            .try_fold(1u128, |acc, n| acc.checked_mul(n))
            .unwrap_or(u128::MAX)
    }

    /// Walks the Cartesian product in canonical order (last dimension
    /// fastest), calling `visit` with the option indices of every
    /// admissible combination.
    fn walk(&self, mut visit: impl FnMut(&[usize])) -> Result<(), UniverseError> {
        self.check_structure()?;
        let compiled = self.compile()?;
        let sizes: Vec<usize> = self.dimensions.iter().map(|d| d.options.len()).collect();
        let mut idx = vec![0usize; sizes.len()];
        loop {
            if !compiled.iter().any(|c| c.matches(&idx)) {
                visit(&idx);
            }
            let mut k = sizes.len();
            loop {
                if k == 0 {
                    return Ok(());
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < sizes[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    pub fn validate(&self) -> Result<UniverseReport, UniverseError> {
        let mut admissible = 0usize;
        self.walk(|_| admissible += 1)?;
        if admissible == 0 {
            return Err(UniverseError::NoAdmissiblePath);
        }
        let empty_rationale: Vec<(DimensionName, String)> = self
            .dimensions
            .iter()
            .flat_map(|d| {
                d.options
                    .iter()
                    .filter(|o| o.reasonableness.rationale.trim().is_empty())
                    .map(move |o| (d.name, o.name.clone()))
            })
            .collect();
        let mut warnings = Vec::new();
        if admissible > SOFT_PATH_LIMIT {
            warnings.push(format!(
                "{admissible} admissible paths exceeds the soft limit of {SOFT_PATH_LIMIT}"
            ));
        }
        for (d, o) in &empty_rationale {
            warnings.push(format!("option {d}={o} has no rationale"));
        }
        Ok(UniverseReport {
            raw_paths: self.raw_path_count(),
            admissible_paths: admissible,
            empty_rationale,
            warnings,
        })
    }

    pub fn enumerate_paths(&self) -> Result<Vec<PathConfig>, UniverseError> {
        let mut paths = Vec::new();
        self.walk(|idx| {
            let choices: Vec<(DimensionName, String)> = self
                .dimensions
                .iter()
                .zip(idx)
                .map(|(d, &i)| (d.name, d.options[i].name.clone()))
                .collect();
            paths.push(PathConfig {
                path_id: path_id_of(&choices),
                option_indices: idx.to_vec(),
                choices,
            });
        })?;
        if paths.is_empty() {
            return Err(UniverseError::NoAdmissiblePath);
        }
        Ok(paths)
    }

    /// Resolves a full choice map (one option per declared dimension).
    pub fn path_from_choices(
        &self,
        choices: &BTreeMap<DimensionName, String>,
    ) -> Result<PathConfig, UniverseError> {
        let mut option_indices = Vec::new();
        let mut resolved = Vec::new();
        for d in &self.dimensions {
            let name = choices
                .get(&d.name)
                .ok_or_else(|| UniverseError::Invalid(format!("no choice for dimension `{}`", d.name)))?;
            let i = d
                .option_index(name)
                .ok_or_else(|| UniverseError::Invalid(format!("unknown option {}={}", d.name, name)))?;
            option_indices.push(i);
            resolved.push((d.name, name.clone()));
        }
        if choices.len() != self.dimensions.len() {
            return Err(UniverseError::Invalid("choice for an undeclared dimension".into()));
        }
        Ok(PathConfig {
            path_id: path_id_of(&resolved),
            option_indices,
            choices: resolved,
        })
    }
}
