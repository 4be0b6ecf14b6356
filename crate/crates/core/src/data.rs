//! Subject records, feature schemas, CSV ingestion, holdout splitting and
//! datasheets.

use crate::hash::labelled_seed;
use crate::seeded_rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_MIN_GROUP_SIZE: usize = 30;
pub const MISSING_STRATUM: &str = "<missing>";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema violation at row {row}, column `{column}`: {message}")]
    SchemaViolation {
        row: usize,
        column: String,
        message: String,
    },
    #[error("duplicate subject_id `{0}`")]
    DuplicateId(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("stratum `{stratum}` has only {size} subject(s); at least 2 required")]
    StratumTooSmall { stratum: String, size: usize },
    #[error("missing provenance field `{0}`")]
    MissingProvenance(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

macro_rules! snake_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

snake_enum!(EventKind {
    Arrest => "arrest",
    Conviction => "conviction",
    IncarcerationRelease => "incarceration_release",
    FailureToAppear => "failure_to_appear",
});

snake_enum!(Degree {
    Felony => "felony",
    Misdemeanor => "misdemeanor",
    Ordinance => "ordinance",
});

snake_enum!(Jurisdiction {
    InState => "in_state",
    OutOfState => "out_of_state",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub degree: Degree,
    pub day: i64,
    pub jurisdiction: Jurisdiction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    #[serde(default)]
    pub missing_allowed: bool,
}

impl FeatureDef {
    pub fn numeric(name: impl Into<String>, missing_allowed: bool) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            missing_allowed,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: &[&str], missing_allowed: bool) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
            missing_allowed,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Numeric => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        let schema = Self { features };
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<()> {
        let mut names = HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(DataError::InvalidSchema("empty feature name".into()));
            }
            if matches!(f.name.as_str(), "subject_id" | "group" | "anchor_day") {
                return Err(DataError::InvalidSchema(format!(
                    "feature name `{}` is reserved",
                    f.name
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate feature `{}`",
                    f.name
                )));
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                if levels.is_empty() {
                    return Err(DataError::InvalidSchema(format!(
                        "categorical feature `{}` declares no levels",
                        f.name
                    )));
                }
                let unique: HashSet<&String> = levels.iter().collect();
                if unique.len() != levels.len() {
                    return Err(DataError::InvalidSchema(format!(
                        "categorical feature `{}` repeats a level",
                        f.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// A single feature cell. Categorical levels are indices into the schema's
/// declared level list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Numeric(f64),
    Level(u32),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Numeric(x) => Some(*x),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    /// Aligned with the dataset's schema.
    pub features: Vec<Value>,
    pub group: String,
    pub events: Vec<EventRecord>,
    pub anchor_day: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub collection_period: String,
    #[serde(default)]
    pub known_biases: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub subjects: Vec<SubjectRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset, checking every subject against the schema.
    pub fn new(
        schema: FeatureSchema,
        subjects: Vec<SubjectRecord>,
        provenance: Provenance,
    ) -> Result<Self> {
        schema.check()?;
        let mut ids = HashSet::new();
        for (row, s) in subjects.iter().enumerate() {
            if !ids.insert(s.subject_id.as_str()) {
                return Err(DataError::DuplicateId(s.subject_id.clone()));
            }
            check_subject(&schema, s, row + 1)?;
        }
        Ok(Self {
            schema,
            subjects,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Same schema and provenance, a subset of subjects (already validated).
    pub fn with_subjects(&self, subjects: Vec<SubjectRecord>) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            subjects,
            provenance: self.provenance.clone(),
        }
    }

    pub fn feature_value(&self, subject: &SubjectRecord, name: &str) -> Option<Value> {
        self.schema.index_of(name).map(|i| subject.features[i])
    }
}

fn check_subject(schema: &FeatureSchema, s: &SubjectRecord, row: usize) -> Result<()> {
    let violation = |column: &str, message: String| DataError::SchemaViolation {
        row,
        column: column.to_string(),
        message,
    };
    if s.subject_id.is_empty() {
        return Err(violation("subject_id", "empty subject_id".into()));
    }
    if s.anchor_day < 0 {
        return Err(violation("anchor_day", "negative anchor_day".into()));
    }
    if s.features.len() != schema.len() {
        return Err(violation(
            "features",
            format!("expected {} values, found {}", schema.len(), s.features.len()),
        ));
    }
    for (def, value) in schema.features.iter().zip(&s.features) {
        match (value, &def.kind) {
            (Value::Missing, _) if !def.missing_allowed => {
                return Err(violation(&def.name, "missing value not allowed".into()));
            }
            (Value::Missing, _) => {}
            (Value::Numeric(x), FeatureKind::Numeric) if x.is_finite() => {}
            (Value::Numeric(_), FeatureKind::Numeric) => {
                return Err(violation(&def.name, "non-finite numeric value".into()));
            }
            (Value::Level(l), FeatureKind::Categorical { levels }) if (*l as usize) < levels.len() => {}
            _ => return Err(violation(&def.name, "value does not match feature kind".into())),
        }
    }
    for e in &s.events {
        if e.day < 0 {
            return Err(violation("events", "negative event day".into()));
        }
    }
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads the subjects table and its companion events table.
pub fn load_dataset(
    subjects_path: &Path,
    events_path: &Path,
    schema: &FeatureSchema,
    provenance: Provenance,
) -> Result<Dataset> {
    let subjects = std::fs::File::open(subjects_path).map_err(io_err(subjects_path))?;
    let events = std::fs::File::open(events_path).map_err(io_err(events_path))?;
    read_dataset(subjects, events, schema, provenance)
}

pub fn read_dataset<R1: Read, R2: Read>(
    subjects: R1,
    events: R2,
    schema: &FeatureSchema,
    provenance: Provenance,
) -> Result<Dataset> {
    schema.check()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(subjects);
    let header = reader.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut fixed = [0usize; 3];
    for (slot, name) in fixed.iter_mut().zip(["subject_id", "group", "anchor_day"]) {
        *slot = col(name).ok_or_else(|| DataError::SchemaViolation {
            row: 0,
            column: name.to_string(),
            message: "missing column".into(),
        })?;
    }
    let mut feature_cols = Vec::with_capacity(schema.len());
    for def in &schema.features {
        feature_cols.push(col(&def.name).ok_or_else(|| DataError::SchemaViolation {
            row: 0,
            column: def.name.clone(),
            message: "missing column".into(),
        })?);
    }
    if header.len() != schema.len() + 3 {
        let known: HashSet<&str> = ["subject_id", "group", "anchor_day"]
            .into_iter()
            .chain(schema.features.iter().map(|f| f.name.as_str()))
            .collect();
        let extra = header.iter().find(|h| !known.contains(h)).unwrap_or("?");
        return Err(DataError::SchemaViolation {
            row: 0,
            column: extra.to_string(),
            message: "column not declared in schema".into(),
        });
    }

    let mut records = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let id = rec.get(fixed[0]).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(DataError::SchemaViolation {
                row,
                column: "subject_id".into(),
                message: "empty subject_id".into(),
            });
        }
        if index.contains_key(&id) {
            return Err(DataError::DuplicateId(id));
        }
        let anchor_text = rec.get(fixed[2]).unwrap_or("");
        let anchor_day: i64 = anchor_text.parse().map_err(|_| DataError::SchemaViolation {
            row,
            column: "anchor_day".into(),
            message: format!("cannot parse `{anchor_text}` as a day"),
        })?;
        let mut features = Vec::with_capacity(schema.len());
        for (def, &c) in schema.features.iter().zip(&feature_cols) {
            features.push(parse_cell(def, rec.get(c).unwrap_or(""), row)?);
        }
        index.insert(id.clone(), records.len());
        records.push(SubjectRecord {
            subject_id: id,
            features,
            group: rec.get(fixed[1]).unwrap_or("").to_string(),
            events: Vec::new(),
            anchor_day,
        });
    }

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(events);
    let header = reader.headers()?.clone();
    let names = ["subject_id", "event_kind", "degree", "day", "jurisdiction"];
    let mut ev_cols = [0usize; 5];
    for (slot, name) in ev_cols.iter_mut().zip(names) {
        *slot = header.iter().position(|h| h == name).ok_or_else(|| {
            DataError::SchemaViolation {
                row: 0,
                column: name.to_string(),
                message: "missing column in events table".into(),
            }
        })?;
    }
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |k: usize| rec.get(ev_cols[k]).unwrap_or("");
        let bad = |k: usize| DataError::SchemaViolation {
            row,
            column: names[k].to_string(),
            message: format!("cannot parse `{}`", field(k)),
        };
        let id = field(0);
        let &subject = index.get(id).ok_or_else(|| DataError::SchemaViolation {
            row,
            column: "subject_id".into(),
            message: format!("event references unknown subject `{id}`"),
        })?;
        let kind = EventKind::parse(field(1)).ok_or_else(|| bad(1))?;
        let degree = Degree::parse(field(2)).ok_or_else(|| bad(2))?;
        let day: i64 = field(3).parse().map_err(|_| bad(3))?;
        let jurisdiction = Jurisdiction::parse(field(4)).ok_or_else(|| bad(4))?;
        records[subject].events.push(EventRecord {
            kind,
            degree,
            day,
            jurisdiction,
        });
    }
    Dataset::new(schema.clone(), records, provenance)
}

fn parse_cell(def: &FeatureDef, text: &str, row: usize) -> Result<Value> {
    let parsed = if text.is_empty() {
        None
    } else {
        match &def.kind {
            FeatureKind::Numeric => text
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Value::Numeric),
            FeatureKind::Categorical { levels } => levels
                .iter()
                .position(|l| l == text)
                .map(|i| Value::Level(i as u32)),
        }
    };
    match parsed {
        Some(v) => Ok(v),
        None if def.missing_allowed => Ok(Value::Missing),
        None => Err(DataError::SchemaViolation {
            row,
            column: def.name.clone(),
            message: if text.is_empty() {
                "missing value not allowed".into()
            } else {
                format!("cannot parse `{text}`")
            },
        }),
    }
}

fn format_value(def: &FeatureDef, v: &Value) -> String {
    match (v, &def.kind) {
        (Value::Missing, _) => String::new(),
        (Value::Numeric(x), _) => format!("{x}"),
        (Value::Level(l), FeatureKind::Categorical { levels }) => levels[*l as usize].clone(),
        (Value::Level(l), FeatureKind::Numeric) => l.to_string(),
    }
}

/// Writes the subjects and events tables; the inverse of [`read_dataset`].
pub fn write_dataset<W1: Write, W2: Write>(d: &Dataset, subjects: W1, events: W2) -> Result<()> {
    let mut w = csv::Writer::from_writer(subjects);
    let mut header = vec!["subject_id".to_string(), "group".into(), "anchor_day".into()];
    header.extend(d.schema.features.iter().map(|f| f.name.clone()));
    w.write_record(&header)?;
    for s in &d.subjects {
        let mut row = vec![s.subject_id.clone(), s.group.clone(), s.anchor_day.to_string()];
        row.extend(
            d.schema
                .features
                .iter()
                .zip(&s.features)
                .map(|(def, v)| format_value(def, v)),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "subjects".into(),
        source,
    })?;

    let mut w = csv::Writer::from_writer(events);
    w.write_record(["subject_id", "event_kind", "degree", "day", "jurisdiction"])?;
    for s in &d.subjects {
        for e in &s.events {
            w.write_record([
                s.subject_id.as_str(),
                e.kind.as_str(),
                e.degree.as_str(),
                &e.day.to_string(),
                e.jurisdiction.as_str(),
            ])?;
        }
    }
    w.flush().map_err(|source| DataError::Io {
        path: "events".into(),
        source,
    })?;
    Ok(())
}

pub fn save_dataset(d: &Dataset, subjects_path: &Path, events_path: &Path) -> Result<()> {
    let s = std::fs::File::create(subjects_path).map_err(io_err(subjects_path))?;
    let e = std::fs::File::create(events_path).map_err(io_err(events_path))?;
    write_dataset(d, std::io::BufWriter::new(s), std::io::BufWriter::new(e))
}

/// Serialized bytes of both tables, the basis of the dataset content hash.
pub fn dataset_bytes(d: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut s = Vec::new();
    let mut e = Vec::new();
    write_dataset(d, &mut s, &mut e)?;
    Ok((s, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationWarning {
    EmptyDataset,
    SmallGroup { group: String, count: usize, min: usize },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::EmptyDataset => write!(f, "dataset is empty"),
            ValidationWarning::SmallGroup { group, count, min } => {
                write!(f, "group `{group}` has {count} subjects (< {min})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub subjects: usize,
    /// Per feature, in schema order.
    pub missingness: Vec<(String, f64)>,
    pub group_counts: BTreeMap<String, usize>,
    pub event_counts: BTreeMap<String, usize>,
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationReport {
    pub fn missingness_of(&self, feature: &str) -> Option<f64> {
        self.missingness
            .iter()
            .find(|(n, _)| n == feature)
            .map(|(_, r)| *r)
    }

    pub fn has_warnings(&self) -> bool {
        !self.warnings.is_empty()
    }
}

pub fn validate_dataset(d: &Dataset, min_group_size: usize) -> ValidationReport {
    let n = d.len();
    let missingness = d
        .schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let missing = d.subjects.iter().filter(|s| s.features[j].is_missing()).count();
            let rate = if n == 0 { 0.0 } else { missing as f64 / n as f64 };
            (f.name.clone(), rate)
        })
        .collect();
    let mut group_counts = BTreeMap::new();
    let mut event_counts: BTreeMap<String, usize> =
        EventKind::ALL.iter().map(|k| (k.as_str().to_string(), 0)).collect();
    for s in &d.subjects {
        *group_counts.entry(s.group.clone()).or_insert(0) += 1;
        for e in &s.events {
            *event_counts.get_mut(e.kind.as_str()).expect("all kinds present") += 1;
        }
    }
    let mut warnings = Vec::new();
    if n == 0 {
        warnings.push(ValidationWarning::EmptyDataset);
    }
    for (g, &c) in &group_counts {
        if c < min_group_size {
            warnings.push(ValidationWarning::SmallGroup {
                group: g.clone(),
                count: c,
                min: min_group_size,
            });
        }
    }
    ValidationReport {
        subjects: n,
        missingness,
        group_counts,
        event_counts,
        warnings,
    }
}

/// Splits off the inconsistency holdout. Membership depends only on the
/// subject ids, the seed and the stratum labels, never on row order.
pub fn split_inconsistency_holdout(
    d: &Dataset,
    fraction: f64,
    master_seed: u64,
    stratify_by: Option<&str>,
) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "holdout fraction {fraction} not in (0, 1)"
        )));
    }
    let holdout: HashSet<String> = match stratify_by {
        None => {
            let mut ids: Vec<&str> = d.subjects.iter().map(|s| s.subject_id.as_str()).collect();
            ids.sort_unstable();
            let mut rng = seeded_rng(labelled_seed(master_seed, "holdout"));
            ids.shuffle(&mut rng);
            let k = (fraction * ids.len() as f64).round() as usize;
            ids[..k].iter().map(|s| s.to_string()).collect()
        }
        Some(key) => {
            let label_of = stratum_labeller(d, key)?;
            let mut strata: BTreeMap<String, Vec<&str>> = BTreeMap::new();
            for s in &d.subjects {
                strata.entry(label_of(s)).or_default().push(s.subject_id.as_str());
            }
            for (label, members) in &strata {
                if members.len() < 2 {
                    return Err(DataError::StratumTooSmall {
                        stratum: label.clone(),
                        size: members.len(),
                    });
                }
            }
            let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
            let quotas = apportion(&sizes, fraction);
            let mut chosen = HashSet::new();
            for ((label, members), quota) in strata.iter_mut().zip(quotas) {
                members.sort_unstable();
                let mut rng = seeded_rng(labelled_seed(master_seed, label));
                members.shuffle(&mut rng);
                chosen.extend(members[..quota].iter().map(|s| s.to_string()));
            }
            chosen
        }
    };
    let (hold, train): (Vec<_>, Vec<_>) = d
        .subjects
        .iter()
        .cloned()
        .partition(|s| holdout.contains(&s.subject_id));
    Ok((d.with_subjects(train), d.with_subjects(hold)))
}

fn stratum_labeller<'a>(
    d: &'a Dataset,
    key: &str,
) -> Result<Box<dyn Fn(&SubjectRecord) -> String + 'a>> {
    if key == "group" {
        return Ok(Box::new(|s: &SubjectRecord| s.group.clone()));
    }
    let j = d
        .schema
        .index_of(key)
        .ok_or_else(|| DataError::InvalidArgument(format!("unknown stratification feature `{key}`")))?;
    let levels = d.schema.features[j].levels().ok_or_else(|| {
        DataError::InvalidArgument(format!("stratification feature `{key}` is not categorical"))
    })?;
    Ok(Box::new(move |s: &SubjectRecord| match s.features[j] {
        Value::Level(l) => levels[l as usize].clone(),
        _ => MISSING_STRATUM.to_string(),
    }))
}

/// Largest-remainder apportionment of `round(fraction * total)` across
/// strata; ties go to the earlier stratum.
fn apportion(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(target.saturating_sub(assigned)) {
        quotas[i] = (quotas[i] + 1).min(sizes[i]);
    }
    quotas
}

pub fn render_datasheet(d: &Dataset, min_group_size: usize) -> Result<String> {
    let p = &d.provenance;
    for (value, name) in [
        (&p.source, "source"),
        (&p.collection_period, "collection_period"),
        (&p.known_biases, "known_biases"),
    ] {
        if value.trim().is_empty() {
            return Err(DataError::MissingProvenance(name));
        }
    }
    let report = validate_dataset(d, min_group_size);
    let one_line = |s: &str| s.replace(['\n', '\r'], " ");
    let mut out = String::new();
    out.push_str("datasheet: subject-level dataset\n");
    out.push_str(&format!("source: {}\n", one_line(&p.source)));
    out.push_str(&format!("collection_period: {}\n", one_line(&p.collection_period)));
    out.push_str(&format!("known_biases: {}\n", one_line(&p.known_biases)));
    out.push_str(&format!("subjects: {}\n", report.subjects));
    out.push_str(&format!("features: {}\n", d.schema.len()));
    for def in &d.schema.features {
        let kind = match &def.kind {
            FeatureKind::Numeric => "numeric".to_string(),
            FeatureKind::Categorical { levels } => format!("categorical[{}]", levels.join("|")),
        };
        out.push_str(&format!("feature.{}: {}\n", def.name, kind));
    }
    for (name, rate) in &report.missingness {
        out.push_str(&format!("missingness.{name}: {rate:.4}\n"));
    }
    for (g, c) in &report.group_counts {
        out.push_str(&format!("group.{g}: {c}\n"));
    }
    for (k, c) in &report.event_counts {
        out.push_str(&format!("events.{k}: {c}\n"));
    }
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    Ok(out)
}

pub fn emit_datasheet(d: &Dataset, path: &Path, min_group_size: usize) -> Result<()> {
    let text = render_datasheet(d, min_group_size)?;
    std::fs::write(path, text).map_err(io_err(path))
}
