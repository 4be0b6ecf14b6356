//! Pre-model stages of a single forking path: outcome derivation,
//! subpopulation restriction, imputation, rare-level grouping, encoding,
//! resampling and variable selection.
//!
//! Every statistic is learned on the training split and replayed frozen on
//! the holdout; the holdout is never resampled or restricted.

pub mod frame;
pub mod outcome;
pub mod plan;
pub mod resample;
pub mod select;

use crate::data::Dataset;
use crate::hash::labelled_seed;
use crate::predicate::{Predicate, PredicateError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frame::{encode, group_rare, impute, Encoding, ImputeMethod, Imputer, RareGrouping, RawFrame};
pub use outcome::{derive_outcome, OutcomeDefinition};
pub use plan::{plan_for_path, PathPlan, PrepPlan, ResampleSpec, MODEL_DIMENSIONS, PREP_DIMENSIONS};
pub use resample::{resample, ResampleMethod};
pub use select::{forward_stepwise, select_variables, Selection, SelectionMethod};

pub const DEFAULT_MIN_ROWS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("subpopulation predicate matches no training subject")]
    EmptySubpopulation,
    #[error("complete-case analysis left {remaining} rows (minimum {min_rows})")]
    AllRowsDropped { remaining: usize, min_rows: usize },
    #[error("training split has {rows} rows (minimum {min_rows})")]
    TooFewRows { rows: usize, min_rows: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("resampling requested but the training split has no positive rows")]
    EmptyMinority,
    #[error("every selected column is constant")]
    DegenerateDesign,
    #[error("{0}")]
    InvalidParameter(String),
    #[error("option `{option}` of dimension `{dimension}`: {message}")]
    InvalidOption { dimension: String, option: String, message: String },
    #[error(transparent)]
    Predicate(#[from] PredicateError),
}

/// Categorical level and the design column that encodes it (`None` for the
/// reference level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelColumn {
    pub feature: String,
    pub level: String,
    pub column: Option<String>,
}

/// Column-major numeric design with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `x[j][i]` is column `j` of row `i`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub encoding: Vec<LevelColumn>,
}

impl LabeledMatrix {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn base_rate(&self) -> f64 {
        if self.y.is_empty() {
            return 0.0;
        }
        self.y.iter().map(|&v| f64::from(v)).sum::<f64>() / self.y.len() as f64
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn select_rows(&self, idx: &[usize]) -> LabeledMatrix {
        LabeledMatrix {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            columns: self.columns.clone(),
            x: self.x.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            encoding: self.encoding.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> LabeledMatrix {
        LabeledMatrix {
            rows: self.rows.clone(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            x: cols.iter().map(|&j| self.x[j].clone()).collect(),
            y: self.y.clone(),
            encoding: self.encoding.clone(),
        }
    }
}

pub fn restrict_subpopulation(d: &Dataset, predicate: &Predicate) -> Result<Dataset, PipelineError> {
    predicate.check(d)?;
    let kept: Vec<_> = d.subjects.iter().filter(|s| predicate.eval(d, s)).cloned().collect();
    if kept.is_empty() {
        return Err(PipelineError::EmptySubpopulation);
    }
    Ok(d.with_subjects(kept))
}

/// Output of the pre-model stages: the final training matrix and the
/// holdout encoded through the same frozen transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: LabeledMatrix,
    pub holdout: LabeledMatrix,
    pub selection: Selection,
    /// Training rows after restriction and imputation, before resampling.
    pub train_rows: usize,
    pub train_base_rate: f64,
    pub warnings: Vec<String>,
}

pub fn prepare(train: &Dataset, holdout: &Dataset, plan: &PrepPlan, seed: u64, min_rows: usize) -> Result<Prepared, PipelineError> {
    let sub = restrict_subpopulation(train, &plan.subpopulation)?;
    let frame = RawFrame::from_dataset(&sub, derive_outcome(&sub, &plan.outcome).y);
    let hframe = RawFrame::from_dataset(holdout, derive_outcome(holdout, &plan.outcome).y);

    let (frame, imputer) = impute(&frame, plan.imputation, min_rows)?;
    let hframe = imputer.apply(&hframe);
    let (frame, rare) = group_rare(&frame, plan.rare_threshold);
    let hframe = rare.apply(&hframe);
    let (matrix, encoding) = encode(&frame);
    let (hmatrix, mut warnings) = encoding.apply(&hframe);
    warnings.extend(rare.warnings.iter().cloned());

    if matrix.n_rows() < min_rows {
        return Err(PipelineError::TooFewRows { rows: matrix.n_rows(), min_rows });
    }
    let pos = matrix.positives();
    if pos == 0 || pos == matrix.n_rows() {
        return Err(PipelineError::SingleClass);
    }
    let train_rows = matrix.n_rows();
    let train_base_rate = matrix.base_rate();
    let resampled = resample(&matrix, plan.resampling.method, plan.resampling.target_rate, labelled_seed(seed, "resample"))?;
    let selection = select_variables(&resampled, &plan.selection, labelled_seed(seed, "select"))?;
    if selection.intercept_only {
        warnings.push("variable selection kept no column; fitting intercept only".into());
    }
    Ok(Prepared {
        train: resampled.select_columns(&selection.columns),
        holdout: hmatrix.select_columns(&selection.columns),
        selection,
        train_rows,
        train_base_rate,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureDef, FeatureSchema, Provenance, SubjectRecord, Value};
    use crate::predicate::CompareOp;

    fn tiny() -> Dataset {
        let schema = FeatureSchema::new(vec![FeatureDef::numeric("age", false)]).unwrap();
        let subjects = (0..10)
            .map(|i| SubjectRecord {
                subject_id: format!("S{i}"),
                features: vec![Value::Numeric(f64::from(i))],
                group: "g".into(),
                events: vec![],
                anchor_day: 0,
            })
            .collect();
        Dataset::new(schema, subjects, Provenance::default()).unwrap()
    }

    #[test]
    fn subpopulation_restriction() {
        let d = tiny();
        assert_eq!(restrict_subpopulation(&d, &Predicate::All).unwrap(), d);
        let p = Predicate::Numeric { feature: "age".into(), op: CompareOp::Ge, value: 7.0 };
        assert_eq!(restrict_subpopulation(&d, &p).unwrap().len(), 3);
        let none = Predicate::Numeric { feature: "age".into(), op: CompareOp::Gt, value: 70.0 };
        assert_eq!(restrict_subpopulation(&d, &none), Err(PipelineError::EmptySubpopulation));
        let unknown = Predicate::Numeric { feature: "height".into(), op: CompareOp::Gt, value: 1.0 };
        assert!(matches!(restrict_subpopulation(&d, &unknown), Err(PipelineError::Predicate(_))));
    }
}
