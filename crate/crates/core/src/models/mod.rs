//! Model-family fork: L2 logistic regression, classification tree and
//! random forest, with serializable fitted models.

pub mod logistic;
pub mod tree;

use crate::pipeline::LabeledMatrix;
use logistic::{clamp_score, fit_logistic, sigmoid};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree::{grow_forest, grow_tree, Tree, TreeParams};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("training data is empty")]
    Empty,
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("schema mismatch: model expects columns {expected:?}, got {found:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
}

fn one() -> f64 {
    1.0
}
fn default_tree_depth() -> usize {
    5
}
fn default_forest_depth() -> usize {
    8
}
fn default_tree_leaf() -> usize {
    20
}
fn default_forest_leaf() -> usize {
    10
}
fn default_trees() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Logistic {
        /// L2 strength; 0 means unpenalized.
        #[serde(default)]
        l2: f64,
    },
    Tree {
        #[serde(default = "default_tree_depth")]
        max_depth: usize,
        #[serde(default = "default_tree_leaf")]
        min_leaf: usize,
        #[serde(default = "one")]
        positive_weight: f64,
    },
    Forest {
        #[serde(default = "default_trees")]
        n_trees: usize,
        #[serde(default = "default_forest_depth")]
        max_depth: usize,
        #[serde(default = "default_forest_leaf")]
        min_leaf: usize,
        /// Defaults to floor(sqrt(#columns)).
        #[serde(default)]
        features_per_split: Option<usize>,
        #[serde(default = "one")]
        positive_weight: f64,
    },
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Logistic { .. } => "logistic",
            ModelSpec::Tree { .. } => "tree",
            ModelSpec::Forest { .. } => "forest",
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_string()));
        match *self {
            ModelSpec::Logistic { l2 } if !(l2 >= 0.0 && l2.is_finite()) => bad("l2 must be a finite value >= 0"),
            ModelSpec::Tree { max_depth, min_leaf, positive_weight } | ModelSpec::Forest { max_depth, min_leaf, positive_weight, .. } => {
                if max_depth < 1 {
                    return bad("max_depth must be >= 1");
                }
                if min_leaf < 1 {
                    return bad("min_leaf must be >= 1");
                }
                if !(positive_weight > 0.0 && positive_weight.is_finite()) {
                    return bad("positive_weight must be > 0");
                }
                match *self {
                    ModelSpec::Forest { n_trees: 0, .. } => bad("n_trees must be >= 1"),
                    ModelSpec::Forest { features_per_split: Some(0), .. } => bad("features_per_split must be >= 1"),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic { intercept: f64, coefficients: Vec<f64>, l2: f64, iterations: usize },
    Tree { tree: Tree },
    Forest { features_per_split: usize, trees: Vec<Tree> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub params: ModelParams,
    /// Training design columns, in order.
    pub columns: Vec<String>,
    pub seed: u64,
    #[serde(default)]
    pub path_id: Option<String>,
    pub training_rows: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Deterministic in `(m, spec, seed)`. Row-count floors are enforced by the
/// caller; here only non-emptiness and both classes are required.
pub fn fit_model(m: &LabeledMatrix, spec: &ModelSpec, seed: u64) -> Result<FittedModel, ModelError> {
    spec.validate()?;
    if m.n_rows() == 0 {
        return Err(ModelError::Empty);
    }
    let pos = m.y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == m.n_rows() {
        return Err(ModelError::SingleClassTraining);
    }
    let mut warnings = Vec::new();
    let all_rows: Vec<usize> = (0..m.n_rows()).collect();
    let params = match *spec {
        ModelSpec::Logistic { l2 } => {
            let cols: Vec<&[f64]> = m.x.iter().map(Vec::as_slice).collect();
            let fit = fit_logistic(&cols, &m.y, l2);
            warnings.extend(fit.warnings.iter().cloned());
            ModelParams::Logistic { intercept: fit.intercept, coefficients: fit.coefficients, l2: fit.l2, iterations: fit.iterations }
        }
        ModelSpec::Tree { max_depth, min_leaf, positive_weight } => {
            let p = TreeParams { max_depth, min_leaf, features_per_split: None, positive_weight };
            ModelParams::Tree { tree: grow_tree(&m.x, &m.y, all_rows, p, None) }
        }
        ModelSpec::Forest { n_trees, max_depth, min_leaf, features_per_split, positive_weight } => {
            let ncol = m.n_cols();
            let k = match features_per_split {
                Some(k) if ncol > 0 && k > ncol => {
                    warnings.push(format!("features_per_split {k} exceeds {ncol} columns; clamped to {ncol}"));
                    ncol
                }
                Some(k) => k,
                None => ((ncol as f64).sqrt().floor() as usize).max(1),
            };
            let p = TreeParams { max_depth, min_leaf, features_per_split: Some(k), positive_weight };
            ModelParams::Forest { features_per_split: k, trees: grow_forest(&m.x, &m.y, n_trees, p, seed) }
        }
    };
    Ok(FittedModel {
        spec: spec.clone(),
        params,
        columns: m.columns.clone(),
        seed,
        path_id: None,
        training_rows: m.n_rows(),
        warnings,
    })
}

/// One probability per row of `m`, each strictly inside (0, 1).
pub fn predict_proba(f: &FittedModel, m: &LabeledMatrix) -> Result<Vec<f64>, ModelError> {
    if f.columns != m.columns {
        return Err(ModelError::SchemaMismatch { expected: f.columns.clone(), found: m.columns.clone() });
    }
    let n = m.n_rows();
    let scores = match &f.params {
        ModelParams::Logistic { intercept, coefficients, .. } => (0..n)
            .map(|i| {
                let z = intercept + coefficients.iter().zip(&m.x).map(|(b, c)| b * c[i]).sum::<f64>();
                clamp_score(sigmoid(z))
            })
            .collect(),
        ModelParams::Tree { tree } => (0..n).map(|i| tree.predict_row(&m.x, i)).collect(),
        ModelParams::Forest { trees, .. } => (0..n)
            .map(|i| trees.iter().map(|t| t.predict_row(&m.x, i)).sum::<f64>() / trees.len() as f64)
            .collect(),
    };
    Ok(scores)
}
