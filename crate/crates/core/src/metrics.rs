//! Per-path discrimination, calibration, budget-constrained and fairness
//! metrics on the inconsistency holdout.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const ECE_BINS: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("no positive labels")]
    NoPositives,
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("{0}")]
    InvalidArgument(String),
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Computed from midranks in doubled integer arithmetic,
/// so it equals the pairwise count exactly.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum over positives of 2 * midrank (1-based)
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled_mid = (i + 1 + j + 1) as u128;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        doubled_rank_sum += doubled_mid * tied_pos;
        i = j + 1;
    }
    // 2U = 2R - P(P+1)
    let doubled_u = doubled_rank_sum - u128::from(pos) * u128::from(pos + 1);
    Ok(doubled_u as f64 / (2 * pos * neg) as f64)
}

pub fn brier(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    check_lengths(scores, labels)?;
    Ok(scores.iter().zip(labels).map(|(s, &l)| (s - f64::from(l)).powi(2)).sum::<f64>() / scores.len() as f64)
}

/// Expected calibration error over equal-width bins, weighted by bin mass.
/// Bin k holds scores in [k/B, (k+1)/B); the top bin is closed.
pub fn ece(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    check_lengths(scores, labels)?;
    let mut sum_s = [0.0; ECE_BINS];
    let mut sum_y = [0.0; ECE_BINS];
    let mut count = [0usize; ECE_BINS];
    for (&s, &l) in scores.iter().zip(labels) {
        let k = ((s * ECE_BINS as f64).floor().max(0.0) as usize).min(ECE_BINS - 1);
        sum_s[k] += s;
        sum_y[k] += f64::from(l);
        count[k] += 1;
    }
    let n = scores.len() as f64;
    Ok((0..ECE_BINS).map(|k| (sum_s[k] - sum_y[k]).abs() / n).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lift {
    pub budget: f64,
    pub top_n: usize,
    pub lift: f64,
    /// Subjects tied with the cutoff score but left outside the top n.
    pub ties_excluded: usize,
}

/// Precision in the top `ceil(k * N)` subjects over the base rate. Ties at
/// the cutoff are broken by ascending subject id.
pub fn lift_at(scores: &[f64], labels: &[u8], subject_ids: &[String], budget: f64) -> Result<Lift, MetricsError> {
    check_lengths(scores, labels)?;
    if subject_ids.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), subject_ids.len()));
    }
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(MetricsError::InvalidArgument(format!("budget {budget} not in (0, 1]")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let n_all = scores.len();
    let top_n = ((budget * n_all as f64 - 1e-9).ceil() as usize).clamp(1, n_all);
    let mut order: Vec<usize> = (0..n_all).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| subject_ids[a].cmp(&subject_ids[b])));
    let hits = order[..top_n].iter().filter(|&&i| labels[i] == 1).count();
    let cutoff = scores[order[top_n - 1]];
    let ties_excluded = order[top_n..].iter().filter(|&&i| scores[i] == cutoff).count();
    let base_rate = pos as f64 / n_all as f64;
    Ok(Lift { budget, top_n, lift: (hits as f64 / top_n as f64) / base_rate, ties_excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub base_rate: f64,
    /// `None` when the group has no positives (resp. negatives).
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    /// Balance for the positive class.
    pub mean_score_given_y1: Option<f64>,
    /// Balance for the negative class.
    pub mean_score_given_y0: Option<f64>,
    pub ece: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessGaps {
    pub base_rate: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub balance_positive: f64,
    pub balance_negative: f64,
    pub ece: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub threshold: f64,
    pub groups: BTreeMap<String, GroupMetrics>,
    /// max - min across reported groups (0 when fewer than two).
    pub gaps: FairnessGaps,
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn spread(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let v: Vec<f64> = values.flatten().collect();
    if v.len() < 2 {
        return 0.0;
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Groups smaller than `min_group_size` are excluded with a warning.
pub fn fairness_report(
    scores: &[f64],
    labels: &[u8],
    groups: &[String],
    threshold: f64,
    min_group_size: usize,
) -> Result<FairnessReport, MetricsError> {
    check_lengths(scores, labels)?;
    if groups.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), groups.len()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricsError::InvalidArgument(format!("threshold {threshold} not in (0, 1)")));
    }
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.as_str()).or_default().push(i);
    }
    let mut out = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for (g, idx) in members {
        if idx.len() < min_group_size {
            warnings.push(format!("group `{g}` has {} subjects (< {min_group_size}); excluded from fairness metrics", idx.len()));
            excluded.push(g.to_string());
            continue;
        }
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        let pos = || s.iter().zip(&y).filter(|(_, &l)| l == 1).map(|(&v, _)| v);
        let neg = || s.iter().zip(&y).filter(|(_, &l)| l == 0).map(|(&v, _)| v);
        out.insert(
            g.to_string(),
            GroupMetrics {
                n: idx.len(),
                base_rate: y.iter().map(|&l| f64::from(l)).sum::<f64>() / y.len() as f64,
                tpr: mean(pos().map(|v| f64::from(u8::from(v >= threshold)))),
                fpr: mean(neg().map(|v| f64::from(u8::from(v >= threshold)))),
                mean_score_given_y1: mean(pos()),
                mean_score_given_y0: mean(neg()),
                ece: ece(&s, &y)?,
            },
        );
    }
    let gaps = FairnessGaps {
        base_rate: spread(out.values().map(|g| Some(g.base_rate))),
        tpr: spread(out.values().map(|g| g.tpr)),
        fpr: spread(out.values().map(|g| g.fpr)),
        balance_positive: spread(out.values().map(|g| g.mean_score_given_y1)),
        balance_negative: spread(out.values().map(|g| g.mean_score_given_y0)),
        ece: spread(out.values().map(|g| Some(g.ece))),
    };
    Ok(FairnessReport { threshold, groups: out, gaps, excluded, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum ImpossibilityFinding {
    /// Base rates agree within tolerance.
    NotApplicable { base_rate_gap: f64 },
    /// Calibration and both balance conditions hold within tolerance.
    AllSatisfied,
    /// The listed criteria exceed the tolerance, with their magnitudes.
    Violated { violations: Vec<(String, f64)> },
}

/// Which of within-group calibration and the two balance conditions fail
/// beyond `tolerance` when groups have different base rates.
pub fn impossibility_check(report: &FairnessReport, tolerance: f64) -> ImpossibilityFinding {
    if report.groups.len() < 2 || report.gaps.base_rate <= tolerance {
        return ImpossibilityFinding::NotApplicable { base_rate_gap: report.gaps.base_rate };
    }
    let calibration = report.groups.values().map(|g| g.ece).fold(0.0, f64::max);
    let mut violations = Vec::new();
    for (name, value) in [
        ("calibration", calibration),
        ("balance_positive_class", report.gaps.balance_positive),
        ("balance_negative_class", report.gaps.balance_negative),
    ] {
        if value > tolerance {
            violations.push((name.to_string(), value));
        }
    }
    if violations.is_empty() {
        ImpossibilityFinding::AllSatisfied
    } else {
        ImpossibilityFinding::Violated { violations }
    }
}

/// ROC curve as (FPR, TPR) vertices, thresholding at each distinct score
/// from the top; starts at (0,0) and ends at (1,1).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>, MetricsError> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// TPR of the piecewise-linear ROC curve at `fpr`; on a vertical segment
/// the highest TPR is taken.
fn tpr_at(curve: &[(f64, f64)], fpr: f64) -> f64 {
    let mut best: f64 = 0.0;
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if fpr < x0 || fpr > x1 {
            continue;
        }
        let y = if x1 == x0 { y1 } else { y0 + (y1 - y0) * (fpr - x0) / (x1 - x0) };
        best = best.max(y);
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCrossing {
    pub crosses: bool,
    /// FPR interval in which the sign of TPR_a - TPR_b first changes.
    pub first_crossing: Option<(f64, f64)>,
}

/// Compares the two ROC curves on the union of their FPR breakpoints.
pub fn roc_crossing(scores_a: &[f64], scores_b: &[f64], labels: &[u8]) -> Result<RocCrossing, MetricsError> {
    let a = roc_curve(scores_a, labels)?;
    let b = roc_curve(scores_b, labels)?;
    let mut grid: Vec<f64> = a.iter().chain(&b).map(|p| p.0).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut last: Option<(f64, i8)> = None;
    for &x in &grid {
        let d = tpr_at(&a, x) - tpr_at(&b, x);
        let sign = if d > 1e-12 {
            1
        } else if d < -1e-12 {
            -1
        } else {
            0
        };
        if sign == 0 {
            continue;
        }
        if let Some((x0, s0)) = last {
            if s0 != sign {
                return Ok(RocCrossing { crosses: true, first_crossing: Some((x0, x)) });
            }
        }
        last = Some((x, sign));
    }
    Ok(RocCrossing { crosses: false, first_crossing: None })
}

/// Everything measured for one path on the holdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub auc: f64,
    pub brier: f64,
    pub ece: f64,
    pub base_rate: f64,
    pub lift: Vec<Lift>,
    pub fairness: FairnessReport,
}

impl PathMetrics {
    /// Value of a named scalar metric, as used by Rashomon rules.
    pub fn get(&self, name: &str) -> Option<f64> {
        let g = &self.fairness.gaps;
        Some(match name {
            "auc" => self.auc,
            "brier" => self.brier,
            "ece" => self.ece,
            "gap_tpr" => g.tpr,
            "gap_fpr" => g.fpr,
            "gap_balance_positive" => g.balance_positive,
            "gap_balance_negative" => g.balance_negative,
            "gap_ece" => g.ece,
            _ => {
                let k: f64 = name.strip_prefix("lift@")?.parse().ok()?;
                return self.lift.iter().find(|l| (l.budget - k).abs() < 1e-12).map(|l| l.lift);
            }
        })
    }

    /// Whether larger values of the metric are better.
    pub fn higher_is_better(name: &str) -> bool {
        name == "auc" || name.starts_with("lift@")
    }
}

pub fn path_metrics(
    scores: &[f64],
    labels: &[u8],
    subject_ids: &[String],
    groups: &[String],
    budgets: &[f64],
    threshold: f64,
    min_group_size: usize,
) -> Result<PathMetrics, MetricsError> {
    let lift = budgets
        .iter()
        .map(|&k| lift_at(scores, labels, subject_ids, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PathMetrics {
        auc: auc(scores, labels)?,
        brier: brier(scores, labels)?,
        ece: ece(scores, labels)?,
        base_rate: labels.iter().map(|&l| f64::from(l)).sum::<f64>() / labels.len() as f64,
        lift,
        fairness: fairness_report(scores, labels, groups, threshold, min_group_size)?,
    })
}
