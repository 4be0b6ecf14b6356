//! Per-subject predictive inconsistency across admissible paths: the score
//! matrix, Rashomon filtering, score-distribution profiles, multiplicity
//! relative to a baseline path, and risk-bin disagreement.

use crate::metrics::PathMetrics;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub const DEFAULT_ABSTAIN_RANGE: f64 = 0.30;
pub const DEFAULT_ABSTAIN_FLIP: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum InconsistencyError {
    #[error("every path failed")]
    AllPathsFailed,
    #[error("no path satisfies the Rashomon rule")]
    EmptyRashomonSet,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("baseline path {0:016x} is not admissible")]
    BaselineNotAdmissible(u64),
    #[error("invalid binning scheme `{name}`: {message}")]
    InvalidScheme { name: String, message: String },
    #[error("path {0:016x} is not part of the universe")]
    UnknownPath(u64),
    #[error("path {path:016x} returned {got} scores for {expected} subjects")]
    ShapeMismatch { path: u64, expected: usize, got: usize },
    #[error("path {path:016x} produced a score outside (0, 1): {score}")]
    ScoreOutOfRange { path: u64, score: f64 },
    #[error("path {0:016x} reported twice")]
    DuplicatePath(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    pub path_id: u64,
    pub reason: String,
}

/// One column per completed path, in canonical path order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub subjects: Vec<String>,
    pub paths: Vec<u64>,
    /// `columns[j][i]`: score of subject `i` under path `j`.
    pub columns: Vec<Vec<f64>>,
    pub admissible: Vec<bool>,
    pub failures: Vec<PathFailure>,
}

impl ScoreMatrix {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn column_of(&self, path: u64) -> Option<usize> {
        self.paths.iter().position(|&p| p == path)
    }

    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s == id)
    }

    pub fn admissible_columns(&self) -> Vec<usize> {
        (0..self.paths.len()).filter(|&j| self.admissible[j]).collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.admissible_columns().iter().map(|&j| self.columns[j][i]).collect()
    }
}

/// Assembles the matrix from per-path results given in any order; columns
/// follow `canonical`, failures are kept with their reasons.
pub fn build_score_matrix(
    subjects: Vec<String>,
    canonical: &[u64],
    results: Vec<(u64, Result<Vec<f64>, String>)>,
) -> Result<ScoreMatrix, InconsistencyError> {
    let position: HashMap<u64, usize> = canonical.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut slots: Vec<Option<Result<Vec<f64>, String>>> = vec![None; canonical.len()];
    for (path, result) in results {
        let &k = position.get(&path).ok_or(InconsistencyError::UnknownPath(path))?;
        if slots[k].is_some() {
            return Err(InconsistencyError::DuplicatePath(path));
        }
        if let Ok(scores) = &result {
            if scores.len() != subjects.len() {
                return Err(InconsistencyError::ShapeMismatch { path, expected: subjects.len(), got: scores.len() });
            }
            if let Some(&s) = scores.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
                return Err(InconsistencyError::ScoreOutOfRange { path, score: s });
            }
        }
        slots[k] = Some(result);
    }
    let mut m = ScoreMatrix { subjects, paths: Vec::new(), columns: Vec::new(), admissible: Vec::new(), failures: Vec::new() };
    for (&path, slot) in canonical.iter().zip(slots) {
        match slot {
            Some(Ok(scores)) => {
                m.paths.push(path);
                m.columns.push(scores);
                m.admissible.push(true);
            }
            Some(Err(reason)) => m.failures.push(PathFailure { path_id: path, reason }),
            None => m.failures.push(PathFailure { path_id: path, reason: "no result reported".into() }),
        }
    }
    if m.paths.is_empty() {
        return Err(InconsistencyError::AllPathsFailed);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RashomonMode {
    Absolute,
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RashomonRule {
    pub metric: String,
    pub mode: RashomonMode,
    /// Threshold (absolute) or tolerance ε (relative).
    pub value: f64,
}

impl Default for RashomonRule {
    fn default() -> Self {
        Self { metric: "auc".into(), mode: RashomonMode::Absolute, value: 0.70 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub path_id: u64,
    pub value: f64,
    pub kept: bool,
}

/// Marks paths admissible by `rule`. For metrics where higher is better,
/// absolute keeps `value >= threshold` and relative keeps
/// `value >= best - ε`; for loss-type metrics the comparisons are mirrored.
/// `metrics[j]` belongs to column `j`.
pub fn rashomon_filter(
    m: &ScoreMatrix,
    metrics: &[PathMetrics],
    rule: &RashomonRule,
) -> Result<(ScoreMatrix, Vec<FilterDecision>), InconsistencyError> {
    let values: Vec<f64> = metrics
        .iter()
        .map(|pm| pm.get(&rule.metric).ok_or_else(|| InconsistencyError::UnknownMetric(rule.metric.clone())))
        .collect::<Result<_, _>>()?;
    let higher = PathMetrics::higher_is_better(&rule.metric);
    let keep = |v: f64| -> bool {
        match (rule.mode, higher) {
            (RashomonMode::Absolute, true) => v >= rule.value,
            (RashomonMode::Absolute, false) => v <= rule.value,
            (RashomonMode::Relative, true) => {
                let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                v >= best - rule.value
            }
            (RashomonMode::Relative, false) => {
                let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
                v <= best + rule.value
            }
        }
    };
    let mut out = m.clone();
    let mut decisions = Vec::new();
    for (j, &v) in values.iter().enumerate() {
        out.admissible[j] = m.admissible[j] && keep(v);
        decisions.push(FilterDecision { path_id: m.paths[j], value: v, kept: out.admissible[j] });
    }
    if !out.admissible.iter().any(|&a| a) {
        return Err(InconsistencyError::EmptyRashomonSet);
    }
    Ok((out, decisions))
}

/// Ordinal risk categories; bin `k` is `[cuts[k-1], cuts[k])`, the first
/// bin starts at 0 and the top bin is closed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinningScheme {
    pub name: String,
    pub cuts: Vec<f64>,
    pub labels: Vec<String>,
}

impl BinningScheme {
    pub fn new(name: &str, cuts: Vec<f64>, labels: Vec<String>) -> Result<Self, InconsistencyError> {
        let s = Self { name: name.into(), cuts, labels };
        s.validate()?;
        Ok(s)
    }

    /// `k` equal-width bins labelled `bin 1 of k` ... unless labels given.
    pub fn equal_width(name: &str, k: usize, labels: Option<Vec<String>>) -> Result<Self, InconsistencyError> {
        let cuts = (1..k).map(|i| i as f64 / k as f64).collect();
        let labels = labels.unwrap_or_else(|| (1..=k).map(|i| format!("bin {i} of {k}")).collect());
        Self::new(name, cuts, labels)
    }

    pub fn validate(&self) -> Result<(), InconsistencyError> {
        let bad = |m: &str| Err(InconsistencyError::InvalidScheme { name: self.name.clone(), message: m.into() });
        if self.cuts.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return bad("cut points must lie in (0, 1)");
        }
        if self.cuts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("cut points must be strictly ascending");
        }
        if self.labels.len() != self.cuts.len() + 1 {
            return bad("need exactly one label per bin");
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.labels.len()
    }

    /// A score equal to a cut belongs to the upper bin.
    pub fn bin_index(&self, score: f64) -> usize {
        self.cuts.partition_point(|&c| c <= score)
    }

    /// Bin index normalized to [0, 1].
    pub fn position(&self, score: f64) -> f64 {
        if self.n_bins() == 1 {
            0.0
        } else {
            self.bin_index(score) as f64 / (self.n_bins() - 1) as f64
        }
    }
}

pub fn bin_scores<'a>(score: f64, scheme: &'a BinningScheme) -> &'a str {
    &scheme.labels[scheme.bin_index(score)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinDisagreement {
    pub label_a: String,
    pub label_b: String,
    pub position_a: f64,
    pub position_b: f64,
    /// Normalized positions differ by more than the finer scheme's bin
    /// width, `1 / max(K_a, K_b)`.
    pub ordinal_disagreement: bool,
    /// Exactly one of the two schemes puts the score in its top bin.
    pub top_bin_mismatch: bool,
}

pub fn bin_disagreement(score: f64, a: &BinningScheme, b: &BinningScheme) -> BinDisagreement {
    let (pa, pb) = (a.position(score), b.position(score));
    let width = 1.0 / a.n_bins().max(b.n_bins()) as f64;
    let top_a = a.bin_index(score) + 1 == a.n_bins();
    let top_b = b.bin_index(score) + 1 == b.n_bins();
    BinDisagreement {
        label_a: bin_scores(score, a).into(),
        label_b: bin_scores(score, b).into(),
        position_a: pa,
        position_b: pb,
        ordinal_disagreement: (pa - pb).abs() > width + 1e-12,
        top_bin_mismatch: top_a != top_b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstainRule {
    #[serde(default = "default_range")]
    pub range: f64,
    #[serde(default = "default_flip")]
    pub flip_rate: f64,
}

fn default_range() -> f64 {
    DEFAULT_ABSTAIN_RANGE
}
fn default_flip() -> f64 {
    DEFAULT_ABSTAIN_FLIP
}

impl Default for AbstainRule {
    fn default() -> Self {
        Self { range: DEFAULT_ABSTAIN_RANGE, flip_rate: DEFAULT_ABSTAIN_FLIP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeProfile {
    pub scheme: String,
    /// Paths per bin.
    pub counts: Vec<usize>,
    /// Shannon entropy of `counts`, divided by ln(#bins).
    pub entropy: f64,
    pub modal_bin: String,
    /// Share of paths outside the modal bin (lowest bin wins ties).
    pub flip_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyProfile {
    pub subject_id: String,
    pub n_paths: usize,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    /// Population standard deviation over admissible paths.
    pub sd: f64,
    pub schemes: Vec<SchemeProfile>,
    pub abstain: bool,
}

pub fn profile_row(subject_id: &str, row: &[f64], schemes: &[BinningScheme], rule: &AbstainRule) -> InconsistencyProfile {
    let n = row.len();
    let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = row.iter().sum::<f64>() / n as f64;
    let sd = if max == min { 0.0 } else { (row.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt() };
    let scheme_profiles: Vec<SchemeProfile> = schemes
        .iter()
        .map(|s| {
            let mut counts = vec![0usize; s.n_bins()];
            for &v in row {
                counts[s.bin_index(v)] += 1;
            }
            let modal = counts.iter().enumerate().fold(0, |best, (k, &c)| if c > counts[best] { k } else { best });
            let entropy = if s.n_bins() < 2 {
                0.0
            } else {
                let h: f64 = counts
                    .iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| {
                        let p = c as f64 / n as f64;
                        p * (1.0 / p).ln()
                    })
                    .sum();
                (h / (s.n_bins() as f64).ln()).clamp(0.0, 1.0)
            };
            SchemeProfile {
                scheme: s.name.clone(),
                counts: counts.clone(),
                entropy,
                modal_bin: s.labels[modal].clone(),
                flip_rate: 1.0 - counts[modal] as f64 / n as f64,
            }
        })
        .collect();
    let range = max - min;
    let abstain = range > rule.range || scheme_profiles.iter().any(|p| p.flip_rate > rule.flip_rate);
    InconsistencyProfile { subject_id: subject_id.into(), n_paths: n, min, max, range, sd, schemes: scheme_profiles, abstain }
}

/// Profiles over the admissible columns, one per subject in matrix order.
pub fn subject_profile(m: &ScoreMatrix, schemes: &[BinningScheme], rule: &AbstainRule) -> Result<Vec<InconsistencyProfile>, InconsistencyError> {
    let cols = m.admissible_columns();
    if cols.is_empty() {
        return Err(InconsistencyError::EmptyRashomonSet);
    }
    Ok((0..m.n_subjects())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = cols.iter().map(|&j| m.columns[j][i]).collect();
            profile_row(&m.subjects[i], &row, schemes, rule)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multiplicity {
    pub baseline: u64,
    pub threshold: f64,
    /// Share of subjects whose decision some admissible path flips.
    pub ambiguity: f64,
    /// Largest share of subjects flipped by a single admissible path.
    pub discrepancy: f64,
    /// Flip share per admissible path.
    pub per_path: BTreeMap<String, f64>,
}

/// Decisions are `score >= threshold`, compared with the baseline column.
pub fn multiplicity_metrics(m: &ScoreMatrix, baseline: u64, threshold: f64) -> Result<Multiplicity, InconsistencyError> {
    let b = m
        .column_of(baseline)
        .filter(|&j| m.admissible[j])
        .ok_or(InconsistencyError::BaselineNotAdmissible(baseline))?;
    let n = m.n_subjects();
    let base: Vec<bool> = m.columns[b].iter().map(|&s| s >= threshold).collect();
    let mut flipped_any = vec![false; n];
    let mut per_path = BTreeMap::new();
    let mut discrepancy: f64 = 0.0;
    for j in m.admissible_columns() {
        let mut flips = 0usize;
        for i in 0..n {
            if (m.columns[j][i] >= threshold) != base[i] {
                flips += 1;
                flipped_any[i] = true;
            }
        }
        let share = if n == 0 { 0.0 } else { flips as f64 / n as f64 };
        discrepancy = discrepancy.max(share);
        per_path.insert(crate::hash::hex_id(m.paths[j]), share);
    }
    let ambiguity = if n == 0 { 0.0 } else { flipped_any.iter().filter(|&&f| f).count() as f64 / n as f64 };
    Ok(Multiplicity { baseline, threshold, ambiguity, discrepancy, per_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> ScoreMatrix {
        let n_paths = rows[0].len();
        let subjects = (0..rows.len()).map(|i| format!("S{i}")).collect();
        let canonical: Vec<u64> = (1..=n_paths as u64).collect();
        let results = (0..n_paths).map(|j| (j as u64 + 1, Ok(rows.iter().map(|r| r[j]).collect()))).collect();
        build_score_matrix(subjects, &canonical, results).unwrap()
    }

    #[test]
    fn one_by_one() {
        let m = matrix(&[&[0.3]]);
        assert_eq!(m.columns, vec![vec![0.3]]);
    }

    #[test]
    fn failures_are_recorded_and_order_is_canonical() {
        let results = vec![
            (3, Ok(vec![0.3])),
            (2, Err("complete-case analysis left 10 rows (minimum 50)".to_string())),
            (1, Ok(vec![0.1])),
        ];
        let m = build_score_matrix(vec!["A".into()], &[1, 2, 3], results).unwrap();
        assert_eq!(m.paths, vec![1, 3]);
        assert_eq!(m.failures.len(), 1);
        assert_eq!(m.failures[0].path_id, 2);
        let all_failed = build_score_matrix(vec!["A".into()], &[1], vec![(1, Err("x".into()))]);
        assert_eq!(all_failed, Err(InconsistencyError::AllPathsFailed));
    }

    #[test]
    fn scores_must_be_interior() {
        let r = build_score_matrix(vec!["A".into()], &[1], vec![(1, Ok(vec![1.0]))]);
        assert!(matches!(r, Err(InconsistencyError::ScoreOutOfRange { .. })));
    }

    #[test]
    fn constant_row_profile() {
        let p = profile_row("A", &[0.42; 5], &[BinningScheme::equal_width("three", 3, None).unwrap()], &AbstainRule::default());
        assert_eq!((p.range, p.sd, p.schemes[0].entropy, p.schemes[0].flip_rate, p.abstain), (0.0, 0.0, 0.0, 0.0, false));
    }

    #[test]
    fn flip_rate_under_threshold_scheme() {
        let two = BinningScheme::new("cut", vec![0.5], vec!["low".into(), "high".into()]).unwrap();
        let p = profile_row("A", &[0.40, 0.60, 0.45], &[two], &AbstainRule::default());
        assert!((p.schemes[0].flip_rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.schemes[0].modal_bin, "low");
        let p = profile_row("A", &[0.10, 0.85, 0.5], &[], &AbstainRule::default());
        assert!(p.abstain);
    }

    #[test]
    fn multiplicity_example() {
        let m = matrix(&[&[0.4, 0.6, 0.45], &[0.8, 0.9, 0.7], &[0.2, 0.1, 0.3]]);
        let r = multiplicity_metrics(&m, 1, 0.5).unwrap();
        assert!((r.ambiguity - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.discrepancy - 1.0 / 3.0).abs() < 1e-15);
        let same = matrix(&[&[0.4, 0.4], &[0.7, 0.7]]);
        let r = multiplicity_metrics(&same, 2, 0.5).unwrap();
        assert_eq!((r.ambiguity, r.discrepancy), (0.0, 0.0));
    }

    fn metrics_with_auc(auc: f64) -> PathMetrics {
        let mut pm = crate::metrics::path_metrics(&[0.2, 0.8], &[0, 1], &["a".into(), "b".into()], &["g".into(), "g".into()], &[], 0.5, 1).unwrap();
        pm.auc = auc;
        pm
    }

    #[test]
    fn rashomon_rules() {
        let m = matrix(&[&[0.4, 0.6, 0.45]]);
        let metrics: Vec<PathMetrics> = [0.65, 0.72, 0.75].iter().map(|&a| metrics_with_auc(a)).collect();
        let (f, d) = rashomon_filter(&m, &metrics, &RashomonRule::default()).unwrap();
        assert_eq!(f.admissible, vec![false, true, true]);
        assert!(!d[0].kept);
        let best_only = RashomonRule { metric: "auc".into(), mode: RashomonMode::Relative, value: 0.0 };
        assert_eq!(rashomon_filter(&m, &metrics, &best_only).unwrap().0.admissible, vec![false, false, true]);
        let wide = RashomonRule { metric: "auc".into(), mode: RashomonMode::Relative, value: 1.0 };
        assert_eq!(rashomon_filter(&m, &metrics, &wide).unwrap().0.admissible, vec![true; 3]);
        let none = RashomonRule { metric: "auc".into(), mode: RashomonMode::Absolute, value: 0.9 };
        assert_eq!(rashomon_filter(&m, &metrics, &none).unwrap_err(), InconsistencyError::EmptyRashomonSet);
        // baseline dropped by the filter
        let (f, _) = rashomon_filter(&m, &metrics, &RashomonRule::default()).unwrap();
        assert_eq!(multiplicity_metrics(&f, 1, 0.5).unwrap_err(), InconsistencyError::BaselineNotAdmissible(1));
    }

    #[test]
    fn binning_rules() {
        let three = BinningScheme::equal_width("three", 3, Some(vec!["low".into(), "medium".into(), "high".into()])).unwrap();
        let five = BinningScheme::equal_width("five", 5, None).unwrap();
        assert_eq!(bin_scores(0.55, &three), "medium");
        assert_eq!(bin_scores(0.55, &five), "bin 3 of 5");
        let d = bin_disagreement(0.68, &three, &five);
        assert_eq!((d.label_a.as_str(), d.label_b.as_str()), ("high", "bin 4 of 5"));
        assert!(d.ordinal_disagreement && d.top_bin_mismatch);
        assert_eq!(five.bin_index(0.4), 2);
        assert!(BinningScheme::new("bad", vec![0.5, 0.4], vec!["a".into(), "b".into(), "c".into()]).is_err());
        assert!(BinningScheme::new("bad", vec![0.5], vec!["a".into()]).is_err());
    }
}
