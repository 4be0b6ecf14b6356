//! Output directory layout: manifest, result tables, model cards,
//! specification curves and the datasheet; plus reloading for the
//! read-only subcommands.

use super::config::{CurveSort, RunConfig};
use super::curve::{curve_csv, curve_svg, CurveData, CurvePath};
use super::run::{PathRecord, RunState};
use super::ReportError;
use crate::data::{render_datasheet, save_dataset};
use crate::hash::{canonical_json, content_hash, fnv1a64, hex_id, parse_hex_id, Fnv1a};
use crate::inconsistency::{bin_disagreement, InconsistencyProfile, Multiplicity, ScoreMatrix, DEFAULT_ABSTAIN_FLIP, DEFAULT_ABSTAIN_RANGE};
use crate::metrics::{impossibility_check, ImpossibilityFinding, ECE_BINS};
use crate::models::logistic::SCORE_FLOOR;
use crate::pipeline::select::STEPWISE_PENALTY;
use crate::universe::DimensionName;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub const MANIFEST_FORMAT: u32 = 1;
pub const CAVEAT: &str = "Scores cover only the declared forking paths; the spread shown is a lower bound on the inconsistency of the full space of reasonable analyses.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPath {
    pub path_id: String,
    pub seed: String,
    pub prep_seed: String,
    pub model_seed: String,
    pub choices: BTreeMap<String, String>,
    pub status: String,
    pub reason: Option<String>,
    pub admissible: bool,
    pub auc: Option<f64>,
    pub metrics_hash: Option<String>,
    pub scores_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub ece_bins: usize,
    pub stepwise_penalty: f64,
    pub score_floor: f64,
    pub abstain_range: f64,
    pub abstain_flip_rate: f64,
    pub abstain_note: String,
    pub caveat: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub config_hash: String,
    pub data_hash: String,
    pub config: Json,
    pub raw_paths: u64,
    pub admissible_paths: usize,
    pub completed_paths: usize,
    pub failed_paths: usize,
    pub rashomon_size: usize,
    pub train_subjects: usize,
    pub holdout_subjects: usize,
    pub settings: Settings,
    pub baseline: Option<String>,
    pub multiplicity: Option<Multiplicity>,
    pub multiplicity_error: Option<String>,
    pub abstain_count: usize,
    pub paths: Vec<ManifestPath>,
    /// Content hashes of the tabular outputs.
    pub artifacts: BTreeMap<String, String>,
}

fn scores_hash(scores: &[f64]) -> u64 {
    let mut h = Fnv1a::new();
    for s in scores {
        h.update(&s.to_bits().to_le_bytes());
    }
    h.finish()
}

fn manifest_path(r: &PathRecord) -> ManifestPath {
    let (status, reason, auc, mh, sh) = match &r.outcome {
        Ok(o) => ("ok", None, Some(o.metrics.auc), Some(hex_id(content_hash(&o.metrics))), Some(hex_id(scores_hash(&o.scores)))),
        Err(e) => ("failed", Some(e.clone()), None, None, None),
    };
    ManifestPath {
        path_id: hex_id(r.path.path_id),
        seed: hex_id(r.seed),
        prep_seed: hex_id(r.prep_seed),
        model_seed: hex_id(r.model_seed),
        choices: r.path.choices.iter().map(|(d, o)| (d.as_str().to_string(), o.clone())).collect(),
        status: status.into(),
        reason,
        admissible: r.admissible,
        auc,
        metrics_hash: mh,
        scores_hash: sh,
    }
}

/// The parts of a finished run the read-only subcommands need.
#[derive(Debug, Clone)]
pub struct ArtifactView {
    pub config: RunConfig,
    pub matrix: ScoreMatrix,
    pub paths: Vec<ManifestPath>,
    pub baseline: Option<u64>,
}

impl ArtifactView {
    pub fn from_state(state: &RunState) -> Self {
        ArtifactView {
            config: state.config.clone(),
            matrix: state.matrix.clone(),
            paths: state.records.iter().map(manifest_path).collect(),
            baseline: state.baseline,
        }
    }

    pub fn profile(&self, subject: &str) -> Result<InconsistencyProfile, ReportError> {
        let i = self.matrix.subject_index(subject).ok_or_else(|| ReportError::UnknownSubject(subject.into()))?;
        Ok(crate::inconsistency::profile_row(subject, &self.matrix.row(i), &self.config.binning, &self.config.abstain))
    }

    /// Scheme for the curve's colour bands: the baseline path's binning
    /// choice when it has one, else the first configured scheme.
    fn band_scheme(&self) -> &crate::inconsistency::BinningScheme {
        let from_baseline = self.baseline.and_then(|b| {
            let p = self.paths.iter().find(|p| parse_hex_id(&p.path_id) == Some(b))?;
            let opt = p.choices.get(DimensionName::Binning.as_str())?;
            let dim = self.config.universe.dimension(DimensionName::Binning)?;
            let o = dim.options.iter().find(|o| &o.name == opt)?;
            self.config.scheme(o.parameters.get("scheme")?.as_str()?)
        });
        from_baseline.unwrap_or(&self.config.binning[0])
    }

    pub fn curve_data(&self, subject: &str) -> Result<CurveData, ReportError> {
        let i = self.matrix.subject_index(subject).ok_or_else(|| ReportError::UnknownSubject(subject.into()))?;
        let dims: Vec<(DimensionName, Vec<String>)> = self
            .config
            .universe
            .dimensions
            .iter()
            .map(|d| (d.name, d.options.iter().map(|o| o.name.clone()).collect()))
            .collect();
        let by_id: BTreeMap<u64, &ManifestPath> =
            self.paths.iter().filter_map(|p| parse_hex_id(&p.path_id).map(|id| (id, p))).collect();
        let paths = self
            .matrix
            .paths
            .iter()
            .enumerate()
            .map(|(j, &pid)| {
                let mp = by_id.get(&pid).ok_or_else(|| ReportError::Artifact(format!("path {} missing from manifest", hex_id(pid))))?;
                Ok(CurvePath {
                    path_id: pid,
                    choices: dims.iter().map(|(d, _)| (*d, mp.choices.get(d.as_str()).cloned().unwrap_or_default())).collect(),
                    score: self.matrix.columns[j][i],
                    admissible: self.matrix.admissible[j],
                    auc: mp.auc.unwrap_or(f64::NAN),
                })
            })
            .collect::<Result<Vec<_>, ReportError>>()?;
        let baseline_score = self.baseline.and_then(|b| self.matrix.column_of(b)).map(|j| self.matrix.columns[j][i]);
        Ok(CurveData { subject: subject.into(), dimensions: dims, paths, baseline_score, scheme: self.band_scheme().clone() })
    }

    /// Writes `curves/<subject>.<ext>` and returns its path.
    pub fn write_curve(&self, out: &Path, subject: &str, svg: bool, sort: CurveSort) -> Result<std::path::PathBuf, ReportError> {
        let data = self.curve_data(subject)?;
        let dir = out.join("curves");
        create_dir(&dir)?;
        let name = sanitize(subject);
        let (file, bytes) = if svg {
            (dir.join(format!("{name}.svg")), curve_svg(&data, sort).into_bytes())
        } else {
            (dir.join(format!("{name}.csv")), curve_csv(&data, sort)?)
        };
        write_file(&file, &bytes)?;
        Ok(file)
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

fn create_dir(p: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(p).map_err(io(p))
}

fn write_file(p: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    std::fs::write(p, bytes).map_err(io(p))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finding_text(f: &ImpossibilityFinding) -> String {
    match f {
        ImpossibilityFinding::NotApplicable { .. } => "not_applicable".into(),
        ImpossibilityFinding::AllSatisfied => "all_satisfied".into(),
        ImpossibilityFinding::Violated { violations } => violations
            .iter()
            .map(|(k, v)| format!("{k}={v:.4}"))
            .collect::<Vec<_>>()
            .join(";"),
    }
}

pub fn matrix_csv(m: &ScoreMatrix) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["subject_id".to_string()];
    header.extend(m.paths.iter().map(|&p| hex_id(p)));
    w.write_record(&header)?;
    for (i, s) in m.subjects.iter().enumerate() {
        let mut row = vec![s.clone()];
        row.extend(m.columns.iter().map(|c| c[i].to_string()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| ReportError::Artifact(e.to_string()))
}

fn paths_csv(state: &RunState) -> Result<Vec<u8>, ReportError> {
    let dims: Vec<DimensionName> = state.config.universe.dimensions.iter().map(|d| d.name).collect();
    let budgets = &state.config.lift_budgets;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["path_id".to_string()];
    header.extend(dims.iter().map(|d| d.as_str().to_string()));
    header.extend(["status", "reason", "admissible", "auc", "brier", "ece", "base_rate"].map(String::from));
    header.extend(budgets.iter().map(|k| format!("lift@{k}")));
    header.extend(
        [
            "gap_base_rate",
            "gap_tpr",
            "gap_fpr",
            "gap_balance_positive",
            "gap_balance_negative",
            "gap_ece",
            "impossibility",
            "train_rows",
            "fitted_rows",
            "train_base_rate",
            "n_selected",
            "intercept_only",
            "warnings",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for r in &state.records {
        let mut row = vec![hex_id(r.path.path_id)];
        row.extend(r.path.choices.iter().map(|(_, o)| o.clone()));
        match &r.outcome {
            Ok(o) => {
                let m = &o.metrics;
                let g = &m.fairness.gaps;
                row.extend(["ok".to_string(), String::new(), r.admissible.to_string()]);
                row.extend([m.auc, m.brier, m.ece, m.base_rate].map(|v| v.to_string()));
                row.extend(m.lift.iter().map(|l| l.lift.to_string()));
                row.extend([g.base_rate, g.tpr, g.fpr, g.balance_positive, g.balance_negative, g.ece].map(|v| v.to_string()));
                row.push(finding_text(&impossibility_check(&m.fairness, state.config.fairness.tolerance)));
                row.push(o.train_rows.to_string());
                row.push(o.fitted_rows.to_string());
                row.push(o.train_base_rate.to_string());
                row.push(o.selected.len().to_string());
                row.push(o.intercept_only.to_string());
                row.push(o.warnings.join(" | "));
            }
            Err(e) => {
                row.extend(["failed".to_string(), e.clone(), "false".to_string()]);
                row.extend(std::iter::repeat_n(String::new(), header.len() - row.len()));
            }
        }
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| ReportError::Artifact(e.to_string()))
}

fn subjects_csv(state: &RunState) -> Result<Vec<u8>, ReportError> {
    let schemes = &state.config.binning;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["subject_id", "group", "n_paths", "min", "max", "range", "sd"].map(String::from).to_vec();
    for s in schemes {
        header.extend([format!("{}_modal", s.name), format!("{}_entropy", s.name), format!("{}_flip_rate", s.name)]);
    }
    header.extend(["abstain", "baseline_score", "baseline_bin_disagreement"].map(String::from));
    w.write_record(&header)?;
    let bcol = state.baseline.and_then(|b| state.matrix.column_of(b));
    for (i, p) in state.profiles.iter().enumerate() {
        let mut row = vec![
            p.subject_id.clone(),
            state.holdout.subjects[i].group.clone(),
            p.n_paths.to_string(),
            p.min.to_string(),
            p.max.to_string(),
            p.range.to_string(),
            p.sd.to_string(),
        ];
        for sp in &p.schemes {
            row.extend([sp.modal_bin.clone(), sp.entropy.to_string(), sp.flip_rate.to_string()]);
        }
        row.push(p.abstain.to_string());
        let base = bcol.map(|j| state.matrix.columns[j][i]);
        row.push(fmt_opt(base));
        row.push(match (base, schemes.len()) {
            (Some(s), n) if n >= 2 => bin_disagreement(s, &schemes[0], &schemes[1]).ordinal_disagreement.to_string(),
            _ => String::new(),
        });
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| ReportError::Artifact(e.to_string()))
}

fn model_card(state: &RunState, r: &PathRecord) -> String {
    let mut s = String::new();
    let o = r.outcome.as_ref().expect("cards are written for completed paths");
    let _ = writeln!(s, "model card");
    let _ = writeln!(s, "path_id: {}", hex_id(r.path.path_id));
    let _ = writeln!(s, "intended_use: {}", state.config.intended_use);
    let _ = writeln!(s, "model_family: {}", r.plan.model.family());
    let _ = writeln!(s, "model_seed: {}", hex_id(r.model_seed));
    let _ = writeln!(s, "\nchoices:");
    for (d, opt) in &r.path.choices {
        let why = state
            .config
            .universe
            .dimension(*d)
            .and_then(|dim| dim.options.iter().find(|o| &o.name == opt))
            .map(|o| {
                let src = serde_json::to_value(o.reasonableness.provenance).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                format!("{} [{}]", o.reasonableness.rationale, src)
            })
            .unwrap_or_default();
        let _ = writeln!(s, "  {}: {} - {}", d.as_str(), opt, why);
    }
    let p = &state.dataset.provenance;
    let _ = writeln!(s, "\ndata provenance:");
    let _ = writeln!(s, "  source: {}", p.source);
    let _ = writeln!(s, "  collection_period: {}", p.collection_period);
    let _ = writeln!(s, "  known_biases: {}", p.known_biases);
    let _ = writeln!(s, "  training_rows: {} before resampling (base rate {:.4}), {} fitted", o.train_rows, o.train_base_rate, o.fitted_rows);
    let _ = writeln!(s, "  selected_columns: {}", if o.intercept_only { "(intercept only)".to_string() } else { o.selected.join(", ") });
    let m = &o.metrics;
    let _ = writeln!(s, "\nmetrics (holdout):");
    let _ = writeln!(s, "  auc: {:.4}", m.auc);
    let _ = writeln!(s, "  brier: {:.4}", m.brier);
    let _ = writeln!(s, "  ece ({ECE_BINS} bins): {:.4}", m.ece);
    let _ = writeln!(s, "  base_rate: {:.4}", m.base_rate);
    for l in &m.lift {
        let _ = writeln!(s, "  lift@{}: {:.4} (top {}, {} tied subjects excluded)", l.budget, l.lift, l.top_n, l.ties_excluded);
    }
    let f = &m.fairness;
    let _ = writeln!(s, "\nfairness (threshold {}):", f.threshold);
    for (g, gm) in &f.groups {
        let _ = writeln!(
            s,
            "  {g}: n={} base_rate={:.4} tpr={} fpr={} mean_score|y=1={} mean_score|y=0={} ece={:.4}",
            gm.n,
            gm.base_rate,
            gm.tpr.map_or("-".into(), |v| format!("{v:.4}")),
            gm.fpr.map_or("-".into(), |v| format!("{v:.4}")),
            gm.mean_score_given_y1.map_or("-".into(), |v| format!("{v:.4}")),
            gm.mean_score_given_y0.map_or("-".into(), |v| format!("{v:.4}")),
            gm.ece
        );
    }
    for w in &f.warnings {
        let _ = writeln!(s, "  warning: {w}");
    }
    let g = &f.gaps;
    let _ = writeln!(
        s,
        "  gaps: tpr={:.4} fpr={:.4} balance_positive={:.4} balance_negative={:.4} ece={:.4}",
        g.tpr, g.fpr, g.balance_positive, g.balance_negative, g.ece
    );
    let _ = writeln!(s, "  calibration/balance check: {}", finding_text(&impossibility_check(f, state.config.fairness.tolerance)));
    if !o.warnings.is_empty() {
        let _ = writeln!(s, "\nwarnings:");
        for w in &o.warnings {
            let _ = writeln!(s, "  {w}");
        }
    }
    let _ = writeln!(s, "\ncaveat: {CAVEAT}");
    s
}

/// Subjects that get a curve: the configured ones, then the widest ranges
/// (ties by subject id).
pub fn curve_subjects(state: &RunState) -> Vec<String> {
    let mut out: Vec<String> = state
        .config
        .curves
        .subjects
        .iter()
        .filter(|s| state.matrix.subject_index(s).is_some())
        .cloned()
        .collect();
    let mut by_range: Vec<&InconsistencyProfile> = state.profiles.iter().collect();
    by_range.sort_by(|a, b| b.range.total_cmp(&a.range).then_with(|| a.subject_id.cmp(&b.subject_id)));
    for p in by_range.into_iter().take(state.config.curves.top_range) {
        if !out.contains(&p.subject_id) {
            out.push(p.subject_id.clone());
        }
    }
    out
}

pub fn build_manifest(state: &RunState, artifacts: BTreeMap<String, String>) -> Manifest {
    let view_paths: Vec<ManifestPath> = state.records.iter().map(manifest_path).collect();
    let (multiplicity, multiplicity_error) = match &state.multiplicity {
        Ok(m) => (Some(m.clone()), None),
        Err(e) => (None, Some(e.clone())),
    };
    let abstain_note = if state.config.abstain.range == DEFAULT_ABSTAIN_RANGE && state.config.abstain.flip_rate == DEFAULT_ABSTAIN_FLIP {
        "abstention thresholds are tool defaults, not validated standards"
    } else {
        "abstention thresholds set by configuration"
    };
    Manifest {
        format: MANIFEST_FORMAT,
        tool: "multiverse".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        master_seed: state.config.master_seed,
        config_hash: hex_id(state.config_hash),
        data_hash: hex_id(state.data_hash),
        config: state.config.canonical(),
        raw_paths: u64::try_from(state.universe.raw_paths).unwrap_or(u64::MAX),
        admissible_paths: state.universe.admissible_paths,
        completed_paths: state.matrix.paths.len(),
        failed_paths: state.matrix.failures.len(),
        rashomon_size: state.matrix.admissible.iter().filter(|&&a| a).count(),
        train_subjects: state.train_size,
        holdout_subjects: state.holdout.len(),
        settings: Settings {
            ece_bins: ECE_BINS,
            stepwise_penalty: STEPWISE_PENALTY,
            score_floor: SCORE_FLOOR,
            abstain_range: state.config.abstain.range,
            abstain_flip_rate: state.config.abstain.flip_rate,
            abstain_note: abstain_note.into(),
            caveat: CAVEAT.into(),
        },
        baseline: state.baseline.map(hex_id),
        multiplicity,
        multiplicity_error,
        abstain_count: state.profiles.iter().filter(|p| p.abstain).count(),
        paths: view_paths,
        artifacts,
    }
}

/// Canonical manifest text and its hash.
pub fn manifest_bytes(m: &Manifest) -> Result<(String, u64), ReportError> {
    let text = canonical_json(&serde_json::to_value(m)?);
    let h = fnv1a64(text.as_bytes());
    Ok((text, h))
}

/// Writes every artifact under `out`; returns the manifest hash.
pub fn write_artifacts(state: &RunState, out: &Path) -> Result<u64, ReportError> {
    create_dir(out)?;
    for sub in ["cards", "curves"] {
        let d = out.join(sub);
        if d.is_dir() {
            std::fs::remove_dir_all(&d).map_err(io(&d))?;
        }
        create_dir(&d)?;
    }
    if state.config.synth.is_some() {
        save_dataset(&state.dataset, &out.join("dataset.csv"), &out.join("events.csv"))?;
    }
    let sheet = render_datasheet(&state.dataset, state.config.fairness.min_group_size)?;
    write_file(&out.join("datasheet.txt"), sheet.as_bytes())?;

    let mut hashes = BTreeMap::new();
    for (name, bytes) in [("matrix.csv", matrix_csv(&state.matrix)?), ("paths.csv", paths_csv(state)?), ("subjects.csv", subjects_csv(state)?)] {
        write_file(&out.join(name), &bytes)?;
        hashes.insert(name.to_string(), hex_id(fnv1a64(&bytes)));
    }
    for r in state.records.iter().filter(|r| r.admissible) {
        write_file(&out.join("cards").join(format!("{}.txt", hex_id(r.path.path_id))), model_card(state, r).as_bytes())?;
    }
    let view = ArtifactView::from_state(state);
    for s in curve_subjects(state) {
        view.write_curve(out, &s, false, state.config.curves.sort)?;
        view.write_curve(out, &s, true, state.config.curves.sort)?;
    }
    let manifest = build_manifest(state, hashes);
    let (text, h) = manifest_bytes(&manifest)?;
    write_file(&out.join("manifest.json"), text.as_bytes())?;
    write_file(&out.join("manifest.hash"), format!("{}\n", hex_id(h)).as_bytes())?;
    Ok(h)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, ReportError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_matrix(path: &Path, admissible: &BTreeMap<u64, bool>) -> Result<ScoreMatrix, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let paths: Vec<u64> = header
        .iter()
        .skip(1)
        .map(|h| parse_hex_id(h).ok_or_else(|| ReportError::Artifact(format!("bad path id `{h}` in matrix.csv"))))
        .collect::<Result<_, _>>()?;
    let mut subjects = Vec::new();
    let mut columns = vec![Vec::new(); paths.len()];
    for rec in r.records() {
        let rec = rec?;
        subjects.push(rec[0].to_string());
        for (j, v) in rec.iter().skip(1).enumerate() {
            columns[j].push(v.parse::<f64>().map_err(|e| ReportError::Artifact(format!("matrix.csv: {e}")))?);
        }
    }
    let adm = paths.iter().map(|p| admissible.get(p).copied().unwrap_or(false)).collect();
    Ok(ScoreMatrix { subjects, paths, columns, admissible: adm, failures: Vec::new() })
}

/// Reloads a finished run from its output directory.
pub fn load_view(out: &Path) -> Result<(ArtifactView, Manifest), ReportError> {
    let manifest = read_manifest(&out.join("manifest.json"))?;
    let config: RunConfig = serde_json::from_value(manifest.config.clone())?;
    let admissible: BTreeMap<u64, bool> =
        manifest.paths.iter().filter_map(|p| parse_hex_id(&p.path_id).map(|id| (id, p.admissible))).collect();
    let matrix = read_matrix(&out.join("matrix.csv"), &admissible)?;
    let view = ArtifactView {
        config,
        matrix,
        paths: manifest.paths.clone(),
        baseline: manifest.baseline.as_deref().and_then(parse_hex_id),
    };
    Ok((view, manifest))
}

/// Human-readable global summary.
pub fn render_summary(m: &Manifest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "manifest format {} ({} {})", m.format, m.tool, m.version);
    let _ = writeln!(s, "config_hash={} data_hash={} master_seed={}", m.config_hash, m.data_hash, m.master_seed);
    let _ = writeln!(s, "raw={} admissible={}", m.raw_paths, m.admissible_paths);
    let _ = writeln!(s, "completed={} failed={} rashomon={}", m.completed_paths, m.failed_paths, m.rashomon_size);
    let _ = writeln!(s, "holdout_subjects={} train_subjects={}", m.holdout_subjects, m.train_subjects);
    match (&m.multiplicity, &m.multiplicity_error) {
        (Some(x), _) => {
            let _ = writeln!(
                s,
                "baseline={} threshold={} ambiguity={:.4} discrepancy={:.4}",
                m.baseline.as_deref().unwrap_or("-"),
                x.threshold,
                x.ambiguity,
                x.discrepancy
            );
        }
        (None, Some(e)) => {
            let _ = writeln!(s, "multiplicity unavailable: {e}");
        }
        _ => {}
    }
    let _ = writeln!(
        s,
        "abstain={} (range > {}, flip_rate > {}; {})",
        m.abstain_count, m.settings.abstain_range, m.settings.abstain_flip_rate, m.settings.abstain_note
    );
    let _ = writeln!(s, "caveat: {}", m.settings.caveat);
    s
}
