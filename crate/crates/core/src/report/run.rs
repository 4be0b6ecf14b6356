//! End-to-end execution of every admissible path.
//!
//! Stages are cached by the dimensions that feed them: paths sharing the
//! pre-model choices share one prepared matrix, and paths that differ only
//! in binning share one fitted model. Seeds are derived from the same
//! sub-path identifiers, so caching never changes a result.

use super::config::RunConfig;
use super::ReportError;
use crate::data::{dataset_bytes, load_dataset, split_inconsistency_holdout, Dataset};
use crate::hash::{fnv1a64, labelled_seed, path_seed, Fnv1a};
use crate::inconsistency::{
    build_score_matrix, multiplicity_metrics, rashomon_filter, subject_profile, FilterDecision, InconsistencyError,
    InconsistencyProfile, Multiplicity, ScoreMatrix,
};
use crate::metrics::{path_metrics, PathMetrics};
use crate::models::{fit_model, predict_proba};
use crate::pipeline::{plan_for_path, prepare, PathPlan, MODEL_DIMENSIONS, PREP_DIMENSIONS};
use crate::synth::{generate_population, inject_bias};
use crate::universe::{PathConfig, UniverseReport};
use rayon::prelude::*;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    /// Base directory for relative data paths.
    pub config_dir: PathBuf,
    /// Read a synthetic run's dataset from these subjects/events files
    /// instead of regenerating it (used by replay).
    pub dataset_files: Option<(PathBuf, PathBuf)>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, config_dir: PathBuf::from("."), dataset_files: None }
    }
}

/// Everything a fitted path contributes; shared by paths that differ only
/// in binning.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutcome {
    pub scores: Vec<f64>,
    pub metrics: PathMetrics,
    /// Training rows before resampling, and the rows the model saw.
    pub train_rows: usize,
    pub fitted_rows: usize,
    pub train_base_rate: f64,
    pub selected: Vec<String>,
    pub intercept_only: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PathRecord {
    pub path: PathConfig,
    pub plan: PathPlan,
    pub seed: u64,
    pub prep_seed: u64,
    pub model_seed: u64,
    pub outcome: Result<Arc<ModelOutcome>, String>,
    pub admissible: bool,
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub config: RunConfig,
    pub config_hash: u64,
    pub data_hash: u64,
    pub dataset: Dataset,
    pub holdout: Dataset,
    pub train_size: usize,
    pub universe: UniverseReport,
    pub records: Vec<PathRecord>,
    pub matrix: ScoreMatrix,
    pub decisions: Vec<FilterDecision>,
    pub profiles: Vec<InconsistencyProfile>,
    pub baseline: Option<u64>,
    pub multiplicity: Result<Multiplicity, String>,
    /// Informational only; never written to the output directory.
    pub elapsed: Duration,
    pub workers: usize,
}

impl RunState {
    pub fn record(&self, path_id: u64) -> Option<&PathRecord> {
        self.records.iter().find(|r| r.path.path_id == path_id)
    }

    pub fn group_of(&self, subject: &str) -> Option<&str> {
        self.holdout.subjects.iter().find(|s| s.subject_id == subject).map(|s| s.group.as_str())
    }
}

/// Content hash of a dataset's two serialized tables.
pub fn tables_hash(subjects: &[u8], events: &[u8]) -> u64 {
    let mut h = Fnv1a::new();
    h.update(&fnv1a64(subjects).to_le_bytes()).update(&fnv1a64(events).to_le_bytes());
    h.finish()
}

fn read_bytes(p: &Path) -> Result<Vec<u8>, ReportError> {
    std::fs::read(p).map_err(|e| ReportError::Io { path: p.display().to_string(), source: e })
}

/// Builds the dataset named by the config and returns it with its content
/// hash. The hash is over the serialized tables, so a synthetic dataset and
/// its written copy hash identically.
pub fn load_data(config: &RunConfig, opts: &RunOptions) -> Result<(Dataset, u64), ReportError> {
    if let Some(s) = &config.synth {
        if let Some((subjects, events)) = &opts.dataset_files {
            let provenance = crate::data::Provenance {
                source: format!("replayed synthetic population from {}", subjects.display()),
                ..Default::default()
            };
            let d = load_dataset(subjects, events, &s.schema()?, provenance)?;
            return Ok((d, tables_hash(&read_bytes(subjects)?, &read_bytes(events)?)));
        }
        let mut d = generate_population(&s.population, labelled_seed(config.master_seed, "population"))?.dataset;
        for (i, b) in s.biases.iter().enumerate() {
            d = inject_bias(&d, b, labelled_seed(config.master_seed, &format!("bias/{i}")))?;
        }
        let (a, b) = dataset_bytes(&d)?;
        return Ok((d, tables_hash(&a, &b)));
    }
    let spec = config.data.as_ref().ok_or_else(|| ReportError::ConfigInvalid("no data source".into()))?;
    let subjects = opts.config_dir.join(&spec.subjects);
    let events = opts.config_dir.join(&spec.events);
    let d = load_dataset(&subjects, &events, &spec.schema, spec.provenance.clone())?;
    Ok((d, tables_hash(&read_bytes(&subjects)?, &read_bytes(&events)?)))
}

fn run_model(
    prepared: &crate::pipeline::Prepared,
    plan: &PathPlan,
    model_seed: u64,
    holdout: &Dataset,
    config: &RunConfig,
) -> Result<ModelOutcome, String> {
    let fitted = fit_model(&prepared.train, &plan.model, model_seed).map_err(|e| e.to_string())?;
    let scores = predict_proba(&fitted, &prepared.holdout).map_err(|e| e.to_string())?;
    let groups: Vec<String> = holdout.subjects.iter().map(|s| s.group.clone()).collect();
    let metrics = path_metrics(
        &scores,
        &prepared.holdout.y,
        &prepared.holdout.rows,
        &groups,
        &config.lift_budgets,
        config.fairness.threshold,
        config.fairness.min_group_size,
    )
    .map_err(|e| format!("holdout metrics: {e}"))?;
    let mut warnings = prepared.warnings.clone();
    warnings.extend(fitted.warnings);
    Ok(ModelOutcome {
        scores,
        metrics,
        train_rows: prepared.train_rows,
        fitted_rows: prepared.train.n_rows(),
        train_base_rate: prepared.train_base_rate,
        selected: prepared.train.columns.clone(),
        intercept_only: prepared.selection.intercept_only,
        warnings,
    })
}

pub fn execute(config: &RunConfig, opts: &RunOptions) -> Result<RunState, ReportError> {
    let start = Instant::now();
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| ReportError::ConfigInvalid(format!("worker pool: {e}")))?;
    pool.install(|| execute_in_pool(config, opts, start))
}

fn execute_in_pool(config: &RunConfig, opts: &RunOptions, start: Instant) -> Result<RunState, ReportError> {
    let master = config.master_seed;
    let universe = config.universe.validate()?;
    let paths = config.universe.enumerate_paths()?;
    let (dataset, data_hash) = load_data(config, opts)?;
    let (train, holdout) =
        split_inconsistency_holdout(&dataset, config.holdout.fraction, master, config.holdout.stratify_by.as_deref())?;

    let plans: Vec<PathPlan> = paths
        .iter()
        .map(|p| plan_for_path(&config.universe, p).map_err(|e| ReportError::ConfigInvalid(e.to_string())))
        .collect::<Result<_, _>>()?;

    // unique stage keys, in order of first appearance
    let mut prep_keys: Vec<(u64, usize)> = Vec::new();
    let mut model_keys: HashMap<u64, Vec<(u64, usize)>> = HashMap::new();
    let mut prep_seen = HashMap::new();
    let mut model_seen = HashMap::new();
    for (i, p) in paths.iter().enumerate() {
        let pk = p.prefix_id(&PREP_DIMENSIONS);
        let mk = p.prefix_id(&MODEL_DIMENSIONS);
        if prep_seen.insert(pk, ()).is_none() {
            prep_keys.push((pk, i));
        }
        if model_seen.insert(mk, ()).is_none() {
            model_keys.entry(pk).or_default().push((mk, i));
        }
    }

    let outcomes: Vec<(u64, Result<Arc<ModelOutcome>, String>)> = prep_keys
        .par_iter()
        .flat_map_iter(|&(pk, first)| {
            let prepared = prepare(&train, &holdout, &plans[first].prep, path_seed(master, pk), config.min_rows);
            let models = &model_keys[&pk];
            let results: Vec<(u64, Result<Arc<ModelOutcome>, String>)> = match prepared {
                Err(e) => models.iter().map(|&(mk, _)| (mk, Err(e.to_string()))).collect(),
                Ok(prep) => models
                    .par_iter()
                    .map(|&(mk, i)| (mk, run_model(&prep, &plans[i], path_seed(master, mk), &holdout, config).map(Arc::new)))
                    .collect(),
            };
            results
        })
        .collect();
    let by_model: HashMap<u64, Result<Arc<ModelOutcome>, String>> = outcomes.into_iter().collect();

    let records: Vec<PathRecord> = paths
        .into_iter()
        .zip(plans)
        .map(|(path, plan)| {
            let pk = path.prefix_id(&PREP_DIMENSIONS);
            let mk = path.prefix_id(&MODEL_DIMENSIONS);
            PathRecord {
                seed: path_seed(master, path.path_id),
                prep_seed: path_seed(master, pk),
                model_seed: path_seed(master, mk),
                outcome: by_model[&mk].clone(),
                admissible: false,
                plan,
                path,
            }
        })
        .collect();

    let subjects: Vec<String> = holdout.subjects.iter().map(|s| s.subject_id.clone()).collect();
    let canonical: Vec<u64> = records.iter().map(|r| r.path.path_id).collect();
    let results = records
        .iter()
        .map(|r| (r.path.path_id, r.outcome.as_ref().map(|o| o.scores.clone()).map_err(Clone::clone)))
        .collect();
    let matrix = match build_score_matrix(subjects, &canonical, results) {
        Err(InconsistencyError::AllPathsFailed) => {
            let reasons: Vec<String> = records.iter().filter_map(|r| r.outcome.as_ref().err().cloned()).take(3).collect();
            return Err(ReportError::AllPathsFailed(reasons.join("; ")));
        }
        other => other?,
    };
    let metrics: Vec<PathMetrics> = matrix
        .paths
        .iter()
        .map(|&p| {
            let r = records.iter().find(|r| r.path.path_id == p).expect("column has a record");
            r.outcome.as_ref().expect("completed path").metrics.clone()
        })
        .collect();
    let (matrix, decisions) = rashomon_filter(&matrix, &metrics, &config.rashomon)?;
    let mut records = records;
    for (j, &p) in matrix.paths.iter().enumerate() {
        if let Some(r) = records.iter_mut().find(|r| r.path.path_id == p) {
            r.admissible = matrix.admissible[j];
        }
    }
    let profiles = subject_profile(&matrix, &config.binning, &config.abstain)?;
    let baseline = match &config.baseline {
        Some(choices) => Some(config.universe.path_from_choices(choices)?.path_id),
        None => matrix.admissible_columns().first().map(|&j| matrix.paths[j]),
    };
    let multiplicity = match baseline {
        Some(b) => multiplicity_metrics(&matrix, b, config.decision_threshold).map_err(|e| e.to_string()),
        None => Err("no admissible baseline".into()),
    };
    Ok(RunState {
        config: config.clone(),
        config_hash: config.content_hash(),
        data_hash,
        train_size: train.len(),
        dataset,
        holdout,
        universe,
        records,
        matrix,
        decisions,
        profiles,
        baseline,
        multiplicity,
        elapsed: start.elapsed(),
        workers: rayon::current_num_threads(),
    })
}
