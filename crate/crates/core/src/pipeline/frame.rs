//! Pre-encoding feature frame and the fitted, frozen preprocessing steps:
//! imputation, rare-level grouping and one-hot encoding. Each step is
//! learned on training rows and replayed unchanged on the holdout.

use super::{LabeledMatrix, LevelColumn, PipelineError};
use crate::data::{Dataset, FeatureKind, Value};
use serde::{Deserialize, Serialize};

pub const OTHER_LEVEL: &str = "OTHER";

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical { levels: Vec<String>, codes: Vec<Option<u32>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub data: ColumnData,
}

impl RawColumn {
    fn is_missing(&self, i: usize) -> bool {
        match &self.data {
            ColumnData::Numeric(v) => v[i].is_none(),
            ColumnData::Categorical { codes, .. } => codes[i].is_none(),
        }
    }

    fn any_missing(&self) -> bool {
        match &self.data {
            ColumnData::Numeric(v) => v.iter().any(Option::is_none),
            ColumnData::Categorical { codes, .. } => codes.iter().any(Option::is_none),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub rows: Vec<String>,
    pub columns: Vec<RawColumn>,
    pub y: Vec<u8>,
}

impl RawFrame {
    /// `y` must be aligned with `d.subjects`.
    pub fn from_dataset(d: &Dataset, y: Vec<u8>) -> RawFrame {
        let columns = d
            .schema
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let data = match &f.kind {
                    FeatureKind::Numeric => ColumnData::Numeric(
                        d.subjects.iter().map(|s| s.features[j].as_f64()).collect(),
                    ),
                    FeatureKind::Categorical { levels } => ColumnData::Categorical {
                        levels: levels.clone(),
                        codes: d
                            .subjects
                            .iter()
                            .map(|s| match s.features[j] {
                                Value::Level(l) => Some(l),
                                _ => None,
                            })
                            .collect(),
                    },
                };
                RawColumn { name: f.name.clone(), data }
            })
            .collect();
        RawFrame {
            rows: d.subjects.iter().map(|s| s.subject_id.clone()).collect(),
            columns,
            y,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(RawColumn::any_missing)
    }

    pub fn select_rows(&self, idx: &[usize]) -> RawFrame {
        RawFrame {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| RawColumn {
                    name: c.name.clone(),
                    data: match &c.data {
                        ColumnData::Numeric(v) => ColumnData::Numeric(idx.iter().map(|&i| v[i]).collect()),
                        ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                            levels: levels.clone(),
                            codes: idx.iter().map(|&i| codes[i]).collect(),
                        },
                    },
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    CompleteCase,
    MeanMode,
    Indicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Fill {
    Numeric(f64),
    Level(u32),
}

/// Frozen imputation statistics. Applying never drops rows, so holdout
/// rows are always scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    pub method: ImputeMethod,
    pub fills: Vec<Fill>,
    /// Columns that receive a `<name>__missing` indicator.
    pub indicators: Vec<usize>,
}

fn column_stat(c: &RawColumn) -> Fill {
    match &c.data {
        ColumnData::Numeric(v) => {
            let (sum, n) = v.iter().flatten().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            Fill::Numeric(if n == 0 { 0.0 } else { sum / n as f64 })
        }
        ColumnData::Categorical { levels, codes } => {
            let mut counts = vec![0usize; levels.len()];
            for c in codes.iter().flatten() {
                counts[*c as usize] += 1;
            }
            // first level wins ties
            let mode = counts.iter().enumerate().fold(0, |best, (i, &c)| if c > counts[best] { i } else { best });
            Fill::Level(mode as u32)
        }
    }
}

/// Learns imputation on `train`. Complete-case drops incomplete training
/// rows and fails if fewer than `min_rows` remain.
pub fn impute(train: &RawFrame, method: ImputeMethod, min_rows: usize) -> Result<(RawFrame, Imputer), PipelineError> {
    let base = if method == ImputeMethod::CompleteCase {
        let keep: Vec<usize> = (0..train.n_rows())
            .filter(|&i| !train.columns.iter().any(|c| c.is_missing(i)))
            .collect();
        if keep.len() < min_rows {
            return Err(PipelineError::AllRowsDropped { remaining: keep.len(), min_rows });
        }
        train.select_rows(&keep)
    } else {
        train.clone()
    };
    let indicators = if method == ImputeMethod::Indicator {
        train.columns.iter().enumerate().filter(|(_, c)| c.any_missing()).map(|(j, _)| j).collect()
    } else {
        Vec::new()
    };
    let imputer = Imputer {
        method,
        fills: base.columns.iter().map(column_stat).collect(),
        indicators,
    };
    let out = imputer.apply(&base);
    Ok((out, imputer))
}

impl Imputer {
    pub fn apply(&self, frame: &RawFrame) -> RawFrame {
        let mut out = frame.clone();
        let mut extra = Vec::new();
        for &j in &self.indicators {
            let c = &frame.columns[j];
            extra.push(RawColumn {
                name: format!("{}__missing", c.name),
                data: ColumnData::Numeric((0..frame.n_rows()).map(|i| Some(f64::from(u8::from(c.is_missing(i))))).collect()),
            });
        }
        for (c, fill) in out.columns.iter_mut().zip(&self.fills) {
            match (&mut c.data, fill) {
                (ColumnData::Numeric(v), Fill::Numeric(m)) => v.iter_mut().for_each(|x| *x = Some(x.unwrap_or(*m))),
                (ColumnData::Categorical { codes, .. }, Fill::Level(l)) => {
                    codes.iter_mut().for_each(|x| *x = Some(x.unwrap_or(*l)))
                }
                _ => unreachable!("imputer fitted on a frame with a different schema"),
            }
        }
        out.columns.extend(extra);
        out
    }
}

/// Per-column level remapping; `None` leaves the column unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RareGrouping {
    pub threshold: f64,
    pub maps: Vec<Option<(Vec<String>, Vec<u32>)>>,
    pub warnings: Vec<String>,
}

/// Merges categorical levels whose training frequency is below `threshold`
/// into a single `OTHER` level (appended after the kept levels).
pub fn group_rare(train: &RawFrame, threshold: f64) -> (RawFrame, RareGrouping) {
    let mut maps = Vec::new();
    let mut warnings = Vec::new();
    for c in &train.columns {
        let ColumnData::Categorical { levels, codes } = &c.data else {
            maps.push(None);
            continue;
        };
        let mut counts = vec![0usize; levels.len()];
        for v in codes.iter().flatten() {
            counts[*v as usize] += 1;
        }
        let total: usize = counts.iter().sum();
        let rare: Vec<bool> = counts
            .iter()
            .map(|&n| total > 0 && (n as f64 / total as f64) < threshold)
            .collect();
        if !rare.iter().any(|&r| r) {
            maps.push(None);
            continue;
        }
        let mut new_levels: Vec<String> = Vec::new();
        let mut map = vec![0u32; levels.len()];
        for (i, l) in levels.iter().enumerate() {
            if !rare[i] {
                map[i] = new_levels.len() as u32;
                new_levels.push(l.clone());
            }
        }
        let other = new_levels.len() as u32;
        new_levels.push(OTHER_LEVEL.into());
        for i in 0..levels.len() {
            if rare[i] {
                map[i] = other;
            }
        }
        if new_levels.len() == 1 {
            warnings.push(format!("every level of `{}` is below {threshold}; merged into a single OTHER level", c.name));
        }
        maps.push(Some((new_levels, map)));
    }
    let g = RareGrouping { threshold, maps, warnings };
    (g.apply(train), g)
}

impl RareGrouping {
    pub fn apply(&self, frame: &RawFrame) -> RawFrame {
        let mut out = frame.clone();
        for (c, m) in out.columns.iter_mut().zip(&self.maps) {
            if let (ColumnData::Categorical { levels, codes }, Some((new_levels, map))) = (&mut c.data, m) {
                *levels = new_levels.clone();
                for x in codes.iter_mut().flatten() {
                    *x = map[*x as usize];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodedColumn {
    Numeric {
        source: usize,
    },
    Categorical {
        source: usize,
        reference: u32,
        /// Levels with a dummy column, in level order.
        dummies: Vec<u32>,
        /// Levels seen in training.
        seen: Vec<bool>,
    },
}

/// Frozen one-hot encoding learned from the training frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub columns: Vec<EncodedColumn>,
    pub names: Vec<String>,
    pub map: Vec<LevelColumn>,
}

/// Numeric columns pass through; each categorical column becomes dummies
/// for every level present in training except the most frequent one
/// (the reference; lowest index wins ties).
pub fn encode(train: &RawFrame) -> (LabeledMatrix, Encoding) {
    let mut columns = Vec::new();
    let mut names = Vec::new();
    let mut map = Vec::new();
    for (j, c) in train.columns.iter().enumerate() {
        match &c.data {
            ColumnData::Numeric(_) => {
                columns.push(EncodedColumn::Numeric { source: j });
                names.push(c.name.clone());
            }
            ColumnData::Categorical { levels, codes } => {
                let mut counts = vec![0usize; levels.len()];
                for v in codes.iter().flatten() {
                    counts[*v as usize] += 1;
                }
                let reference = counts.iter().enumerate().fold(0, |best, (i, &n)| if n > counts[best] { i } else { best }) as u32;
                let seen: Vec<bool> = counts.iter().map(|&n| n > 0).collect();
                let mut dummies = Vec::new();
                for (i, level) in levels.iter().enumerate() {
                    let column = if i as u32 != reference && seen[i] {
                        dummies.push(i as u32);
                        let name = format!("{}={}", c.name, level);
                        names.push(name.clone());
                        Some(name)
                    } else {
                        None
                    };
                    if seen[i] {
                        map.push(LevelColumn { feature: c.name.clone(), level: level.clone(), column });
                    }
                }
                columns.push(EncodedColumn::Categorical { source: j, reference, dummies, seen });
            }
        }
    }
    let enc = Encoding { columns, names, map };
    let (m, _) = enc.apply(train);
    (m, enc)
}

impl Encoding {
    /// Encodes `frame`; levels unseen in training map to OTHER when it has
    /// a dummy column, else to the reference level, with a warning.
    pub fn apply(&self, frame: &RawFrame) -> (LabeledMatrix, Vec<String>) {
        let n = frame.n_rows();
        let mut x = Vec::with_capacity(self.names.len());
        let mut warnings = Vec::new();
        for ec in &self.columns {
            match ec {
                EncodedColumn::Numeric { source } => {
                    let ColumnData::Numeric(v) = &frame.columns[*source].data else {
                        unreachable!("encoding fitted on a different schema")
                    };
                    x.push(v.iter().map(|o| o.unwrap_or(0.0)).collect());
                }
                EncodedColumn::Categorical { source, reference, dummies, seen } => {
                    let raw = &frame.columns[*source];
                    let ColumnData::Categorical { levels, codes } = &raw.data else {
                        unreachable!("encoding fitted on a different schema")
                    };
                    let other = levels.iter().position(|l| l == OTHER_LEVEL).map(|i| i as u32).filter(|i| dummies.contains(i));
                    let mut unseen = 0usize;
                    let effective: Vec<u32> = codes
                        .iter()
                        .map(|c| match c {
                            Some(l) if seen[*l as usize] => *l,
                            _ => {
                                unseen += 1;
                                other.unwrap_or(*reference)
                            }
                        })
                        .collect();
                    if unseen > 0 {
                        let target = if other.is_some() { OTHER_LEVEL } else { levels[*reference as usize].as_str() };
                        warnings.push(format!("{unseen} row(s) of `{}` carry a level unseen in training; mapped to `{target}`", raw.name));
                    }
                    for &d in dummies {
                        x.push(effective.iter().map(|&l| f64::from(u8::from(l == d))).collect());
                    }
                }
            }
        }
        debug_assert!(x.iter().all(|c: &Vec<f64>| c.len() == n));
        let m = LabeledMatrix {
            rows: frame.rows.clone(),
            columns: self.names.clone(),
            x,
            y: frame.y.clone(),
            encoding: self.map.clone(),
        };
        (m, warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(cols: Vec<RawColumn>, n: usize) -> RawFrame {
        RawFrame { rows: (0..n).map(|i| format!("S{i}")).collect(), columns: cols, y: vec![0; n] }
    }

    fn numeric(name: &str, v: Vec<Option<f64>>) -> RawColumn {
        RawColumn { name: name.into(), data: ColumnData::Numeric(v) }
    }

    fn categorical(name: &str, levels: &[&str], codes: Vec<Option<u32>>) -> RawColumn {
        RawColumn {
            name: name.into(),
            data: ColumnData::Categorical { levels: levels.iter().map(|s| s.to_string()).collect(), codes },
        }
    }

    #[test]
    fn mean_fill() {
        let f = frame(vec![numeric("a", vec![Some(1.0), Some(2.0), None, Some(3.0)])], 4);
        let (out, imp) = impute(&f, ImputeMethod::MeanMode, 1).unwrap();
        assert_eq!(imp.fills, vec![Fill::Numeric(2.0)]);
        assert_eq!(out.columns[0].data, ColumnData::Numeric(vec![Some(1.0), Some(2.0), Some(2.0), Some(3.0)]));
    }

    #[test]
    fn mode_fill_and_indicator() {
        let f = frame(vec![categorical("c", &["x", "y"], vec![Some(1), None, Some(1), Some(0)])], 4);
        let (out, imp) = impute(&f, ImputeMethod::Indicator, 1).unwrap();
        assert_eq!(imp.fills, vec![Fill::Level(1)]);
        assert_eq!(out.columns.len(), 2);
        assert_eq!(out.columns[1].name, "c__missing");
        assert_eq!(out.columns[1].data, ColumnData::Numeric(vec![Some(0.0), Some(1.0), Some(0.0), Some(0.0)]));
    }

    #[test]
    fn complete_case_drops_and_floors() {
        let f = frame(vec![numeric("a", vec![Some(1.0), None, Some(3.0)])], 3);
        let (out, imp) = impute(&f, ImputeMethod::CompleteCase, 2).unwrap();
        assert_eq!(out.n_rows(), 2);
        assert_eq!(imp.fills, vec![Fill::Numeric(2.0)]);
        assert_eq!(
            impute(&f, ImputeMethod::CompleteCase, 3),
            Err(PipelineError::AllRowsDropped { remaining: 2, min_rows: 3 })
        );
    }

    #[test]
    fn no_missing_is_identity_for_every_method() {
        let f = frame(vec![numeric("a", vec![Some(1.0), Some(5.0)]), categorical("c", &["x", "y"], vec![Some(0), Some(1)])], 2);
        for m in [ImputeMethod::CompleteCase, ImputeMethod::MeanMode, ImputeMethod::Indicator] {
            assert_eq!(impute(&f, m, 1).unwrap().0, f);
        }
    }

    fn freq_column() -> RawFrame {
        // frequencies 0.5, 0.3, 0.15, 0.05
        let mut codes = vec![Some(0); 10];
        codes.extend(vec![Some(1); 6]);
        codes.extend(vec![Some(2); 3]);
        codes.push(Some(3));
        frame(vec![categorical("c", &["a", "b", "c", "d"], codes)], 20)
    }

    #[test]
    fn rare_levels_merge() {
        let (out, g) = group_rare(&freq_column(), 0.10);
        let ColumnData::Categorical { levels, codes } = &out.columns[0].data else { panic!() };
        assert_eq!(levels, &["a", "b", "c", "OTHER"]);
        assert_eq!(codes[19], Some(3));
        assert!(g.warnings.is_empty());
        let (same, _) = group_rare(&freq_column(), 0.0);
        assert_eq!(same, freq_column());
    }

    #[test]
    fn all_rare_collapses_with_warning() {
        let (out, g) = group_rare(&freq_column(), 0.9);
        let ColumnData::Categorical { levels, .. } = &out.columns[0].data else { panic!() };
        assert_eq!(levels, &["OTHER"]);
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn encoding_drops_most_frequent_level() {
        let f = frame(vec![categorical("c", &["x", "y", "z"], vec![Some(1), Some(1), Some(0), Some(1)])], 4);
        let (m, enc) = encode(&f);
        assert_eq!(m.columns, vec!["c=x"]);
        assert_eq!(m.x, vec![vec![0.0, 0.0, 1.0, 0.0]]);
        // "z" unseen in training maps to the reference level
        let h = frame(vec![categorical("c", &["x", "y", "z"], vec![Some(2), Some(0)])], 2);
        let (hm, w) = enc.apply(&h);
        assert_eq!(hm.x, vec![vec![0.0, 1.0]]);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("`y`"));
    }

    #[test]
    fn unseen_level_prefers_other() {
        let f = frame(vec![categorical("c", &["a", "b", "OTHER"], vec![Some(0), Some(0), Some(2), Some(0)])], 4);
        let (_, enc) = encode(&f);
        let h = frame(vec![categorical("c", &["a", "b", "OTHER"], vec![Some(1)])], 1);
        let (hm, w) = enc.apply(&h);
        assert_eq!(hm.columns, vec!["c=OTHER"]);
        assert_eq!(hm.x, vec![vec![1.0]]);
        assert!(w[0].contains("OTHER"));
    }
}
