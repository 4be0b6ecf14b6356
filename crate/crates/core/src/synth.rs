//! Synthetic populations with a known latent risk model, plus injectors
//! for non-sampling error (label noise, selection and coverage bias,
//! measurement noise, missingness).

use crate::data::{
    Dataset, DataError, Degree, EventKind, EventRecord, FeatureDef, FeatureKind, FeatureSchema,
    Jurisdiction, Provenance, SubjectRecord, Value,
};
use crate::predicate::{Predicate, PredicateError};
use crate::seeded_rng;
use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DAYS_PER_YEAR: f64 = 365.0;
/// Provenance text of a freshly generated population.
pub const NO_BIASES: &str = "none injected";
const PROB_TOL: f64 = 1e-9;

pub const HISTORY_FEATURES: [&str; 3] = ["prior_arrests", "prior_convictions", "prior_felony_convictions"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
    #[error("calibration targets must be strictly increasing in window and rate")]
    NonMonotoneTargets,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("rate out of range: {0}")]
    RateOutOfRange(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<PredicateError> for SynthError {
    fn from(e: PredicateError) -> Self {
        match e {
            PredicateError::UnknownFeature(f) => SynthError::UnknownFeature(f),
            other => SynthError::InvalidSpec(other.to_string()),
        }
    }
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// Converts fractional years to whole days (floor).
pub fn years_to_days(years: f64) -> i64 {
    (years * DAYS_PER_YEAR).floor() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTarget {
    pub window_days: i64,
    pub rate: f64,
}

/// Piecewise-constant hazard. `rates_per_year[k]` applies on
/// `[breaks_days[k-1], breaks_days[k])`; the final rate continues past the
/// last break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseHazard {
    pub breaks_days: Vec<i64>,
    pub rates_per_year: Vec<f64>,
}

impl PiecewiseHazard {
    pub fn constant(rate_per_year: f64) -> Self {
        Self {
            breaks_days: vec![],
            rates_per_year: vec![rate_per_year],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates_per_year.len() != self.breaks_days.len() + 1 {
            return Err(SynthError::InvalidSpec(
                "hazard needs exactly one more rate than breaks".into(),
            ));
        }
        if self.rates_per_year.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(SynthError::InvalidSpec("hazard rates must be finite and >= 0".into()));
        }
        let mut prev = 0;
        for &b in &self.breaks_days {
            if b <= prev {
                return Err(SynthError::InvalidSpec(
                    "hazard breaks must be positive and strictly increasing".into(),
                ));
            }
            prev = b;
        }
        Ok(())
    }

    fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        // (start_day, end_day, rate_per_day)
        let starts = std::iter::once(0.0).chain(self.breaks_days.iter().map(|&b| b as f64));
        let ends = self
            .breaks_days
            .iter()
            .map(|&b| b as f64)
            .chain(std::iter::once(f64::INFINITY));
        starts
            .zip(ends)
            .zip(&self.rates_per_year)
            .map(|((s, e), r)| (s, e, r / DAYS_PER_YEAR))
    }

    /// Cumulative hazard at `day` days after the anchor.
    pub fn cumulative(&self, day: f64) -> f64 {
        let mut total = 0.0;
        for (s, e, r) in self.segments() {
            if day <= s {
                break;
            }
            total += r * (day.min(e) - s);
        }
        total
    }

    pub fn survival(&self, day: f64) -> f64 {
        (-self.cumulative(day)).exp()
    }

    /// Smallest time at which the cumulative hazard reaches `h`, or `None`
    /// if it never does.
    pub fn inverse_cumulative(&self, h: f64) -> Option<f64> {
        let mut acc = 0.0;
        for (s, e, r) in self.segments() {
            let span = if e.is_infinite() { f64::INFINITY } else { r * (e - s) };
            if acc + span >= h {
                return if r > 0.0 { Some(s + (h - acc) / r) } else { None };
            }
            acc += span;
        }
        None
    }
}

fn check_targets(targets: &[RateTarget]) -> Result<()> {
    if targets.is_empty() {
        return Err(SynthError::InvalidSpec("no calibration targets".into()));
    }
    for t in targets {
        if !(t.rate > 0.0 && t.rate < 1.0) {
            return Err(SynthError::RateOutOfRange(format!(
                "target rate {} not in (0, 1)",
                t.rate
            )));
        }
        if t.window_days <= 0 {
            return Err(SynthError::InvalidSpec("target windows must be positive".into()));
        }
    }
    if targets
        .windows(2)
        .any(|w| w[1].window_days <= w[0].window_days || w[1].rate <= w[0].rate)
    {
        return Err(SynthError::NonMonotoneTargets);
    }
    Ok(())
}

/// Closed-form piecewise rates for a homogeneous population:
/// `rate_k = ln(S_{k-1} / S_k) / (years in interval k)`.
pub fn calibrate_hazard(targets: &[RateTarget]) -> Result<PiecewiseHazard> {
    check_targets(targets)?;
    let mut rates = Vec::with_capacity(targets.len() + 1);
    let (mut prev_s, mut prev_day) = (1.0_f64, 0_i64);
    for t in targets {
        let s = 1.0 - t.rate;
        let years = (t.window_days - prev_day) as f64 / DAYS_PER_YEAR;
        rates.push((prev_s / s).ln() / years);
        prev_s = s;
        prev_day = t.window_days;
    }
    rates.push(*rates.last().expect("non-empty"));
    Ok(PiecewiseHazard {
        breaks_days: targets.iter().map(|t| t.window_days).collect(),
        rates_per_year: rates,
    })
}

/// Calibrates the baseline hazard so that the population-average survival
/// of subjects with relative risks `exp(linear_predictor)` hits every
/// target. Reduces to [`calibrate_hazard`] when all predictors are zero.
pub fn calibrate_hazard_for_population(
    targets: &[RateTarget],
    linear_predictor: &[f64],
) -> Result<PiecewiseHazard> {
    check_targets(targets)?;
    if linear_predictor.is_empty() {
        return calibrate_hazard(targets);
    }
    let risks: Vec<f64> = linear_predictor.iter().map(|e| e.exp()).collect();
    let mean_survival = |cum: f64| risks.iter().map(|r| (-r * cum).exp()).sum::<f64>() / risks.len() as f64;
    let mut rates = Vec::with_capacity(targets.len() + 1);
    let (mut prev_cum, mut prev_day) = (0.0_f64, 0_i64);
    for t in targets {
        let goal = 1.0 - t.rate;
        let mut lo = prev_cum;
        let mut hi = prev_cum.max(1e-6) * 2.0;
        while mean_survival(hi) > goal {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(SynthError::InvalidSpec("calibration diverged".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mean_survival(mid) > goal {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let cum = 0.5 * (lo + hi);
        let years = (t.window_days - prev_day) as f64 / DAYS_PER_YEAR;
        rates.push((cum - prev_cum) / years);
        prev_cum = cum;
        prev_day = t.window_days;
    }
    rates.push(*rates.last().expect("non-empty"));
    Ok(PiecewiseHazard {
        breaks_days: targets.iter().map(|t| t.window_days).collect(),
        rates_per_year: rates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardSpec {
    Piecewise(PiecewiseHazard),
    /// Baseline hazard solved against the realized population.
    CalibrateTo(Vec<RateTarget>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    pub p: f64,
    #[serde(default)]
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Numeric {
        mean: f64,
        sd: f64,
        #[serde(default)]
        group_shift: BTreeMap<String, f64>,
    },
    Categorical {
        levels: Vec<(String, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGenerator {
    pub name: String,
    #[serde(flatten)]
    pub kind: GeneratorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistorySpec {
    pub arrests_min: u32,
    pub arrests_max: u32,
    pub conviction_prob: f64,
    pub felony_prob: f64,
    pub out_of_state_prob: f64,
    pub lookback_days: i64,
    /// Emit prior_arrests / prior_convictions / prior_felony_convictions
    /// as numeric features.
    pub as_features: bool,
}

impl Default for HistorySpec {
    fn default() -> Self {
        Self {
            arrests_min: 0,
            arrests_max: 0,
            conviction_prob: 0.5,
            felony_prob: 0.3,
            out_of_state_prob: 0.0,
            lookback_days: 3650,
            as_features: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureSpec {
    pub felony_prob: f64,
    pub out_of_state_prob: f64,
    /// Also record an arrest on the failure day.
    pub with_arrest: bool,
}

impl Default for FailureSpec {
    fn default() -> Self {
        Self {
            felony_prob: 0.5,
            out_of_state_prob: 0.0,
            with_arrest: true,
        }
    }
}

fn default_anchor_range() -> [i64; 2] {
    [3650, 5475]
}

fn default_follow_up() -> i64 {
    5475
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub n: usize,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub features: Vec<FeatureGenerator>,
    #[serde(default)]
    pub history: HistorySpec,
    /// Weights keyed by numeric feature name or `feature=level`.
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    pub hazard: HazardSpec,
    #[serde(default)]
    pub failure: FailureSpec,
    #[serde(default = "default_anchor_range")]
    pub anchor_day_range: [i64; 2],
    #[serde(default = "default_follow_up")]
    pub follow_up_days: i64,
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SynthError::RateOutOfRange(format!("{what} = {p}")))
    }
}

fn check_mix<'a>(ps: impl Iterator<Item = &'a f64>, what: &str) -> Result<()> {
    let mut total = 0.0;
    for p in ps {
        check_prob(*p, what)?;
        total += p;
    }
    if (total - 1.0).abs() > PROB_TOL {
        return Err(SynthError::InvalidSpec(format!("{what} probabilities sum to {total}")));
    }
    Ok(())
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(SynthError::InvalidSpec("n must be >= 1".into()));
        }
        if self.groups.is_empty() {
            return Err(SynthError::InvalidSpec("at least one group required".into()));
        }
        check_mix(self.groups.iter().map(|g| &g.p), "group mix")?;
        for f in &self.features {
            match &f.kind {
                GeneratorKind::Numeric { sd, mean, .. } => {
                    if !(*sd >= 0.0 && sd.is_finite() && mean.is_finite()) {
                        return Err(SynthError::InvalidSpec(format!("feature `{}`: bad mean/sd", f.name)));
                    }
                }
                GeneratorKind::Categorical { levels } => {
                    if levels.is_empty() {
                        return Err(SynthError::InvalidSpec(format!("feature `{}` has no levels", f.name)));
                    }
                    check_mix(levels.iter().map(|(_, p)| p), &format!("feature `{}`", f.name))?;
                }
            }
        }
        let h = &self.history;
        if h.arrests_min > h.arrests_max {
            return Err(SynthError::InvalidSpec("arrests_min > arrests_max".into()));
        }
        check_prob(h.conviction_prob, "history.conviction_prob")?;
        check_prob(h.felony_prob, "history.felony_prob")?;
        check_prob(h.out_of_state_prob, "history.out_of_state_prob")?;
        check_prob(self.failure.felony_prob, "failure.felony_prob")?;
        check_prob(self.failure.out_of_state_prob, "failure.out_of_state_prob")?;
        if h.lookback_days < 1 {
            return Err(SynthError::InvalidSpec("lookback_days must be >= 1".into()));
        }
        let [lo, hi] = self.anchor_day_range;
        if lo < 0 || lo > hi {
            return Err(SynthError::InvalidSpec("anchor_day_range must satisfy 0 <= min <= max".into()));
        }
        if self.follow_up_days < 0 {
            return Err(SynthError::InvalidSpec("follow_up_days must be >= 0".into()));
        }
        match &self.hazard {
            HazardSpec::Piecewise(hz) => hz.validate()?,
            HazardSpec::CalibrateTo(t) => check_targets(t)?,
        }
        self.schema()?;
        for key in self.coefficients.keys() {
            if !self.coefficient_key_known(key) {
                return Err(SynthError::UnknownFeature(key.clone()));
            }
        }
        Ok(())
    }

    fn coefficient_key_known(&self, key: &str) -> bool {
        if self.history.as_features && HISTORY_FEATURES.contains(&key) {
            return true;
        }
        self.features.iter().any(|f| match &f.kind {
            GeneratorKind::Numeric { .. } => f.name == key,
            GeneratorKind::Categorical { levels } => levels
                .iter()
                .any(|(l, _)| key.strip_prefix(&f.name).and_then(|r| r.strip_prefix('=')) == Some(l)),
        })
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        let mut defs: Vec<FeatureDef> = self
            .features
            .iter()
            .map(|f| FeatureDef {
                name: f.name.clone(),
                kind: match &f.kind {
                    GeneratorKind::Numeric { .. } => FeatureKind::Numeric,
                    GeneratorKind::Categorical { levels } => FeatureKind::Categorical {
                        levels: levels.iter().map(|(l, _)| l.clone()).collect(),
                    },
                },
                missing_allowed: false,
            })
            .collect();
        if self.history.as_features {
            defs.extend(HISTORY_FEATURES.iter().map(|n| FeatureDef::numeric(*n, false)));
        }
        Ok(FeatureSchema::new(defs)?)
    }
}

/// Ground truth kept beside (never inside) the generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTruth {
    /// Continuous failure time in days after the anchor; `None` = never.
    pub failure_time: Vec<Option<f64>>,
    pub linear_predictor: Vec<f64>,
    pub hazard: PiecewiseHazard,
    pub prior_arrests: Vec<u32>,
    pub prior_convictions: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SyntheticPopulation {
    pub dataset: Dataset,
    pub truth: LatentTruth,
}

fn draw_index(rng: &mut impl Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn pick<T: Copy>(rng: &mut impl Rng, p: f64, yes: T, no: T) -> T {
    if rng.random::<f64>() < p {
        yes
    } else {
        no
    }
}

pub fn generate_population(spec: &PopulationSpec, seed: u64) -> Result<SyntheticPopulation> {
    spec.validate()?;
    let schema = spec.schema()?;
    let mut rng = seeded_rng(seed);
    let width = spec.n.to_string().len().max(6);
    let h = &spec.history;
    let mut subjects = Vec::with_capacity(spec.n);
    let mut eta = Vec::with_capacity(spec.n);
    let mut prior_arrests = Vec::with_capacity(spec.n);
    let mut prior_convictions = Vec::with_capacity(spec.n);
    let normals: Vec<Option<Normal<f64>>> = spec
        .features
        .iter()
        .map(|f| match f.kind {
            GeneratorKind::Numeric { sd, .. } if sd > 0.0 => Some(Normal::new(0.0, sd).expect("sd validated")),
            _ => None,
        })
        .collect();

    for i in 0..spec.n {
        let g = &spec.groups[draw_index(&mut rng, spec.groups.iter().map(|g| g.p))];
        let mut lp = g.intercept;
        let mut features = Vec::with_capacity(schema.len());
        for (f, normal) in spec.features.iter().zip(&normals) {
            match &f.kind {
                GeneratorKind::Numeric { mean, group_shift, .. } => {
                    let noise = normal.map_or(0.0, |n| n.sample(&mut rng));
                    let x = mean + group_shift.get(&g.name).copied().unwrap_or(0.0) + noise;
                    lp += spec.coefficients.get(&f.name).copied().unwrap_or(0.0) * x;
                    features.push(Value::Numeric(x));
                }
                GeneratorKind::Categorical { levels } => {
                    let l = draw_index(&mut rng, levels.iter().map(|(_, p)| *p));
                    lp += spec
                        .coefficients
                        .get(&format!("{}={}", f.name, levels[l].0))
                        .copied()
                        .unwrap_or(0.0);
                    features.push(Value::Level(l as u32));
                }
            }
        }
        let anchor_day = rng.random_range(spec.anchor_day_range[0]..=spec.anchor_day_range[1]);
        let n_arrests = rng.random_range(h.arrests_min..=h.arrests_max);
        let mut events = Vec::new();
        let (mut convictions, mut felonies) = (0u32, 0u32);
        for _ in 0..n_arrests {
            let back = rng.random_range(1..=h.lookback_days);
            let day = (anchor_day - back).max(0);
            let degree = pick(&mut rng, h.felony_prob, Degree::Felony, Degree::Misdemeanor);
            let jurisdiction = pick(&mut rng, h.out_of_state_prob, Jurisdiction::OutOfState, Jurisdiction::InState);
            events.push(EventRecord { kind: EventKind::Arrest, degree, day, jurisdiction });
            if rng.random::<f64>() < h.conviction_prob {
                events.push(EventRecord { kind: EventKind::Conviction, degree, day, jurisdiction });
                convictions += 1;
                if degree == Degree::Felony {
                    felonies += 1;
                }
            }
        }
        if h.as_features {
            let hist = [n_arrests, convictions, felonies];
            for (name, v) in HISTORY_FEATURES.iter().zip(hist) {
                lp += spec.coefficients.get(*name).copied().unwrap_or(0.0) * f64::from(v);
                features.push(Value::Numeric(f64::from(v)));
            }
        }
        prior_arrests.push(n_arrests);
        prior_convictions.push(convictions);
        eta.push(lp);
        subjects.push(SubjectRecord {
            subject_id: format!("P{i:0width$}"),
            features,
            group: g.name.clone(),
            events,
            anchor_day,
        });
    }

    let hazard = match &spec.hazard {
        HazardSpec::Piecewise(hz) => hz.clone(),
        HazardSpec::CalibrateTo(targets) => calibrate_hazard_for_population(targets, &eta)?,
    };

    let mut failure_time = Vec::with_capacity(spec.n);
    for (s, lp) in subjects.iter_mut().zip(&eta) {
        let u: f64 = rng.sample(Open01);
        let degree = pick(&mut rng, spec.failure.felony_prob, Degree::Felony, Degree::Misdemeanor);
        let jurisdiction = pick(&mut rng, spec.failure.out_of_state_prob, Jurisdiction::OutOfState, Jurisdiction::InState);
        let t = hazard.inverse_cumulative(-u.ln() * (-lp).exp());
        if let Some(t) = t {
            let offset = (t.ceil() as i64).max(1);
            if offset <= spec.follow_up_days {
                let day = s.anchor_day + offset;
                if spec.failure.with_arrest {
                    s.events.push(EventRecord { kind: EventKind::Arrest, degree, day, jurisdiction });
                }
                s.events.push(EventRecord { kind: EventKind::Conviction, degree, day, jurisdiction });
            }
        }
        failure_time.push(t);
    }

    let dataset = Dataset::new(
        schema,
        subjects,
        Provenance {
            source: format!("synthetic population, generator seed {seed}"),
            collection_period: format!(
                "simulated anchor days {}..={}, follow-up {} days",
                spec.anchor_day_range[0], spec.anchor_day_range[1], spec.follow_up_days
            ),
            known_biases: NO_BIASES.into(),
        },
    )?;
    Ok(SyntheticPopulation {
        dataset,
        truth: LatentTruth {
            failure_time,
            linear_predictor: eta,
            hazard,
            prior_arrests,
            prior_convictions,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tilt {
    pub feature: String,
    pub slope: f64,
}

fn default_noise_window() -> i64 {
    730
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BiasInjectorSpec {
    /// Flips post-anchor conviction presence within `window_days` at a
    /// per-group rate; with `feature` set, instead swaps a categorical
    /// level for a uniformly drawn other level.
    LabelNoise {
        #[serde(default)]
        rates: BTreeMap<String, f64>,
        #[serde(default)]
        default_rate: f64,
        #[serde(default = "default_noise_window")]
        window_days: i64,
        #[serde(default)]
        feature: Option<String>,
    },
    /// Keeps each subject with its group's inclusion probability,
    /// optionally tilted on the logit scale by a standardized feature.
    SelectionBias {
        #[serde(default)]
        inclusion: BTreeMap<String, f64>,
        #[serde(default = "one")]
        default_inclusion: f64,
        #[serde(default)]
        tilt: Option<Tilt>,
    },
    CoverageFilter {
        predicate: Predicate,
    },
    /// Zero-mean Gaussian noise on numeric features, optionally per group.
    MeasurementNoise {
        #[serde(default)]
        sd: BTreeMap<String, f64>,
        #[serde(default)]
        group_sd: BTreeMap<String, BTreeMap<String, f64>>,
    },
    Missingness {
        feature: String,
        mechanism: Mechanism,
        rate: f64,
        #[serde(default)]
        condition_feature: Option<String>,
        #[serde(default = "one")]
        slope: f64,
    },
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit_tilted(p: f64, shift: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if p >= 1.0 {
        1.0
    } else {
        sigmoid((p / (1.0 - p)).ln() + shift)
    }
}

fn numeric_index(d: &Dataset, name: &str) -> Result<usize> {
    let j = d
        .schema
        .index_of(name)
        .ok_or_else(|| SynthError::UnknownFeature(name.to_string()))?;
    match d.schema.features[j].kind {
        FeatureKind::Numeric => Ok(j),
        _ => Err(SynthError::InvalidSpec(format!("feature `{name}` must be numeric"))),
    }
}

/// Mean and sd over non-missing values of a numeric column.
fn standardizer(d: &Dataset, j: usize) -> (f64, f64) {
    let xs: Vec<f64> = d.subjects.iter().filter_map(|s| s.features[j].as_f64()).collect();
    if xs.is_empty() {
        return (0.0, 1.0);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    (m, if v > 0.0 { v.sqrt() } else { 1.0 })
}

/// Applies one injector, returning a new dataset; the input is untouched.
pub fn inject_bias(d: &Dataset, spec: &BiasInjectorSpec, seed: u64) -> Result<Dataset> {
    let mut rng = seeded_rng(seed);
    let mut out = d.clone();
    match spec {
        BiasInjectorSpec::LabelNoise { rates, default_rate, window_days, feature } => {
            check_prob(*default_rate, "label_noise.default_rate")?;
            for (g, r) in rates {
                check_prob(*r, &format!("label_noise.rates[{g}]"))?;
            }
            if *window_days < 1 {
                return Err(SynthError::InvalidSpec("label_noise.window_days must be >= 1".into()));
            }
            let level_target = match feature {
                Some(name) => {
                    let j = out
                        .schema
                        .index_of(name)
                        .ok_or_else(|| SynthError::UnknownFeature(name.clone()))?;
                    let n_levels = out.schema.features[j].levels().map(|l| l.len()).ok_or_else(|| {
                        SynthError::InvalidSpec(format!("label_noise feature `{name}` must be categorical"))
                    })?;
                    Some((j, n_levels))
                }
                None => None,
            };
            for s in &mut out.subjects {
                let rate = rates.get(&s.group).copied().unwrap_or(*default_rate);
                let u: f64 = rng.random();
                let draw: f64 = rng.random();
                if u >= rate {
                    continue;
                }
                match level_target {
                    Some((j, n_levels)) => {
                        if let Value::Level(l) = s.features[j] {
                            if n_levels > 1 {
                                let k = ((draw * (n_levels - 1) as f64) as u32).min(n_levels as u32 - 2);
                                let new = if k >= l { k + 1 } else { k };
                                s.features[j] = Value::Level(new);
                            }
                        }
                    }
                    None => {
                        let (a, w) = (s.anchor_day, *window_days);
                        let in_window = |e: &EventRecord| {
                            e.kind == EventKind::Conviction && e.day > a && e.day <= a + w
                        };
                        if s.events.iter().any(in_window) {
                            s.events.retain(|e| !in_window(e));
                        } else {
                            let offset = 1 + ((draw * w as f64) as i64).min(w - 1);
                            s.events.push(EventRecord {
                                kind: EventKind::Conviction,
                                degree: Degree::Felony,
                                day: a + offset,
                                jurisdiction: Jurisdiction::InState,
                            });
                        }
                    }
                }
            }
        }
        BiasInjectorSpec::SelectionBias { inclusion, default_inclusion, tilt } => {
            check_prob(*default_inclusion, "selection_bias.default_inclusion")?;
            for (g, p) in inclusion {
                check_prob(*p, &format!("selection_bias.inclusion[{g}]"))?;
            }
            let tilt = match tilt {
                Some(t) => {
                    let j = numeric_index(d, &t.feature)?;
                    Some((j, standardizer(d, j), t.slope))
                }
                None => None,
            };
            out.subjects.retain(|s| {
                let base = inclusion.get(&s.group).copied().unwrap_or(*default_inclusion);
                let p = match tilt {
                    Some((j, (m, sd), slope)) => {
                        let z = s.features[j].as_f64().map_or(0.0, |x| (x - m) / sd);
                        logit_tilted(base, slope * z)
                    }
                    None => base,
                };
                rng.random::<f64>() < p
            });
        }
        BiasInjectorSpec::CoverageFilter { predicate } => {
            predicate.check(d)?;
            out.subjects.retain(|s| predicate.eval(d, s));
        }
        BiasInjectorSpec::MeasurementNoise { sd, group_sd } => {
            let resolve = |map: &BTreeMap<String, f64>| -> Result<Vec<(usize, Normal<f64>)>> {
                map.iter()
                    .filter(|(_, s)| **s > 0.0)
                    .map(|(name, s)| {
                        if !(s.is_finite()) {
                            return Err(SynthError::InvalidSpec(format!("noise sd for `{name}`")));
                        }
                        Ok((numeric_index(d, name)?, Normal::new(0.0, *s).expect("finite sd")))
                    })
                    .collect()
            };
            for (name, s) in sd.iter().chain(group_sd.values().flat_map(|m| m.iter())) {
                if *s < 0.0 {
                    return Err(SynthError::RateOutOfRange(format!("noise sd for `{name}` = {s}")));
                }
                numeric_index(d, name)?;
            }
            let global = resolve(sd)?;
            let per_group: BTreeMap<&String, Vec<(usize, Normal<f64>)>> = group_sd
                .iter()
                .map(|(g, m)| Ok((g, resolve(m)?)))
                .collect::<Result<_>>()?;
            for s in &mut out.subjects {
                let noises = per_group.get(&s.group).unwrap_or(&global);
                for (j, normal) in noises {
                    let z = normal.sample(&mut rng);
                    if let Value::Numeric(x) = &mut s.features[*j] {
                        *x += z;
                    }
                }
            }
        }
        BiasInjectorSpec::Missingness { feature, mechanism, rate, condition_feature, slope } => {
            check_prob(*rate, "missingness.rate")?;
            let j = d
                .schema
                .index_of(feature)
                .ok_or_else(|| SynthError::UnknownFeature(feature.clone()))?;
            let condition = match mechanism {
                Mechanism::Mcar => None,
                Mechanism::Mar => {
                    let name = condition_feature.as_ref().ok_or_else(|| {
                        SynthError::InvalidSpec("MAR missingness needs condition_feature".into())
                    })?;
                    let c = numeric_index(d, name)?;
                    Some((c, standardizer(d, c)))
                }
                Mechanism::Mnar => {
                    let c = numeric_index(d, feature)?;
                    Some((c, standardizer(d, c)))
                }
            };
            out.schema.features[j].missing_allowed = true;
            for s in &mut out.subjects {
                let p = match condition {
                    None => *rate,
                    Some((c, (m, sd))) => {
                        let z = s.features[c].as_f64().map_or(0.0, |x| (x - m) / sd);
                        logit_tilted(*rate, slope * z)
                    }
                };
                if rng.random::<f64>() < p {
                    s.features[j] = Value::Missing;
                }
            }
        }
    }
    let applied = serde_json::to_string(spec).unwrap_or_default();
    out.provenance.known_biases = match out.provenance.known_biases.as_str() {
        "" | NO_BIASES => format!("injected {applied}"),
        prev => format!("{prev}; injected {applied}"),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_dataset;
    use crate::predicate::{EventCondition, EventPeriod};

    fn base_spec(hazard: HazardSpec) -> PopulationSpec {
        serde_json::from_value(serde_json::json!({
            "n": 1000,
            "groups": [{"name": "A", "p": 0.5}, {"name": "B", "p": 0.5, "intercept": 0.2}],
            "features": [
                {"name": "x", "numeric": {"mean": 0.0, "sd": 1.0}},
                {"name": "c", "categorical": {"levels": [["u", 0.7], ["v", 0.3]]}}
            ],
            "coefficients": {"x": 0.5, "c=v": 0.3},
            "hazard": serde_json::to_value(hazard).unwrap()
        }))
        .unwrap()
    }

    fn rate_in_window(d: &Dataset, window: i64) -> f64 {
        let hits = d
            .subjects
            .iter()
            .filter(|s| {
                s.events
                    .iter()
                    .any(|e| e.kind == EventKind::Conviction && e.day > s.anchor_day && e.day <= s.anchor_day + window)
            })
            .count();
        hits as f64 / d.len() as f64
    }

    #[test]
    fn closed_form_calibration_matches_hand_values() {
        let t = |y: f64, r: f64| RateTarget { window_days: years_to_days(y), rate: r };
        let hz = calibrate_hazard(&[t(3.5, 0.15), t(6.0, 0.31), t(10.0, 0.43)]).unwrap();
        let expect = [0.0464, 0.0834, 0.0478];
        for (got, want) in hz.rates_per_year.iter().zip(expect) {
            assert!((got - want).abs() < 5e-4, "{got} vs {want}");
        }
        // the calibrated hazard reproduces each cumulative target
        for (w, r) in [(1277, 0.15), (2190, 0.31), (3650, 0.43)] {
            assert!((1.0 - hz.survival(w as f64) - r).abs() < 1e-12);
        }
        let one = calibrate_hazard(&[RateTarget { window_days: 730, rate: 1.0 - (-1.0f64).exp() }]).unwrap();
        assert!((one.rates_per_year[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_monotone_targets_rejected() {
        let err = calibrate_hazard(&[
            RateTarget { window_days: 730, rate: 0.4 },
            RateTarget { window_days: 1460, rate: 0.3 },
        ])
        .unwrap_err();
        assert!(matches!(err, SynthError::NonMonotoneTargets));
    }

    #[test]
    fn population_calibration_reduces_to_closed_form() {
        let targets = [RateTarget { window_days: 500, rate: 0.2 }, RateTarget { window_days: 900, rate: 0.35 }];
        let a = calibrate_hazard(&targets).unwrap();
        let b = calibrate_hazard_for_population(&targets, &[0.0; 10]).unwrap();
        for (x, y) in a.rates_per_year.iter().zip(&b.rates_per_year) {
            assert!((x - y).abs() < 1e-10);
        }
        let eta: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) / 10.0).collect();
        let c = calibrate_hazard_for_population(&targets, &eta).unwrap();
        for t in targets {
            let cum = c.cumulative(t.window_days as f64);
            let s = eta.iter().map(|e| (-e.exp() * cum).exp()).sum::<f64>() / eta.len() as f64;
            assert!((1.0 - s - t.rate).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_hazard_never_fails() {
        let pop = generate_population(&base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.0))), 3).unwrap();
        assert_eq!(pop.dataset.len(), 1000);
        assert!(pop.truth.failure_time.iter().all(Option::is_none));
        assert_eq!(rate_in_window(&pop.dataset, 100_000), 0.0);
    }

    #[test]
    fn flat_hazard_two_year_rate_matches_exponential_cdf() {
        // P(T <= 730d) = 1 - exp(-2 * rate) = 0.3
        let rate = -(0.7f64).ln() / 2.0;
        let mut spec = base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(rate)));
        spec.coefficients.clear();
        spec.groups[1].intercept = 0.0;
        let pop = generate_population(&spec, 11).unwrap();
        let r = rate_in_window(&pop.dataset, 730);
        assert!((r - 0.30).abs() < 0.03, "empirical {r}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.2)));
        let a = generate_population(&spec, 5).unwrap();
        let b = generate_population(&spec, 5).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = generate_population(&spec, 6).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.2)));
        spec.groups[0].p = 0.6;
        assert!(matches!(generate_population(&spec, 1), Err(SynthError::InvalidSpec(_))));
        let mut spec = base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(-1.0)));
        spec.n = 5;
        assert!(generate_population(&spec, 1).is_err());
        let mut spec = base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.1)));
        spec.coefficients.insert("nope".into(), 1.0);
        assert!(matches!(generate_population(&spec, 1), Err(SynthError::UnknownFeature(_))));
    }

    #[test]
    fn zero_rate_injectors_are_identity() {
        let d = generate_population(&base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.2))), 9)
            .unwrap()
            .dataset;
        let specs = [
            BiasInjectorSpec::LabelNoise { rates: BTreeMap::new(), default_rate: 0.0, window_days: 730, feature: None },
            BiasInjectorSpec::SelectionBias { inclusion: BTreeMap::new(), default_inclusion: 1.0, tilt: None },
            BiasInjectorSpec::MeasurementNoise { sd: [("x".to_string(), 0.0)].into(), group_sd: BTreeMap::new() },
            BiasInjectorSpec::CoverageFilter { predicate: Predicate::All },
        ];
        for spec in &specs {
            let out = inject_bias(&d, spec, 1).unwrap();
            assert_eq!(out.subjects, d.subjects, "{spec:?}");
            assert!(out.provenance.known_biases.starts_with("injected "), "{spec:?}");
        }
        for mechanism in [Mechanism::Mcar, Mechanism::Mar, Mechanism::Mnar] {
            let spec = BiasInjectorSpec::Missingness {
                feature: "x".into(),
                mechanism,
                rate: 0.0,
                condition_feature: Some("prior_arrests".into()),
                slope: 2.0,
            };
            assert_eq!(inject_bias(&d, &spec, 1).unwrap().subjects, d.subjects);
        }
    }

    #[test]
    fn mcar_missingness_rate() {
        let mut spec = base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.2)));
        spec.n = 10_000;
        let d = generate_population(&spec, 2).unwrap().dataset;
        let out = inject_bias(
            &d,
            &BiasInjectorSpec::Missingness {
                feature: "x".into(),
                mechanism: Mechanism::Mcar,
                rate: 0.10,
                condition_feature: None,
                slope: 1.0,
            },
            4,
        )
        .unwrap();
        let m = validate_dataset(&out, 30).missingness_of("x").unwrap();
        assert!((m - 0.10).abs() <= 0.01, "{m}");
        // original untouched
        assert_eq!(validate_dataset(&d, 30).missingness_of("x"), Some(0.0));
    }

    #[test]
    fn mnar_blanks_high_values_more_often() {
        let mut spec = base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.2)));
        spec.n = 5000;
        let d = generate_population(&spec, 2).unwrap().dataset;
        let out = inject_bias(
            &d,
            &BiasInjectorSpec::Missingness {
                feature: "x".into(),
                mechanism: Mechanism::Mnar,
                rate: 0.2,
                condition_feature: None,
                slope: 2.0,
            },
            4,
        )
        .unwrap();
        let (mut hi, mut hi_miss, mut lo, mut lo_miss) = (0, 0, 0, 0);
        for (a, b) in d.subjects.iter().zip(&out.subjects) {
            let x = a.features[0].as_f64().unwrap();
            if x > 0.0 {
                hi += 1;
                hi_miss += b.features[0].is_missing() as usize;
            } else {
                lo += 1;
                lo_miss += b.features[0].is_missing() as usize;
            }
        }
        assert!(hi_miss as f64 / hi as f64 > 2.0 * lo_miss as f64 / lo as f64);
    }

    #[test]
    fn coverage_filter_keeps_convicted_share_from_sidecar() {
        let mut spec = base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.0)));
        spec.n = 5000;
        spec.history = HistorySpec { arrests_min: 1, arrests_max: 1, conviction_prob: 0.6, ..HistorySpec::default() };
        let pop = generate_population(&spec, 8).unwrap();
        let oracle = pop.truth.prior_convictions.iter().filter(|&&c| c > 0).count();
        let predicate = Predicate::Events(EventCondition {
            kinds: vec![EventKind::Conviction],
            degrees: None,
            jurisdictions: None,
            period: EventPeriod::Any,
            min_count: 1,
        });
        let out = inject_bias(&pop.dataset, &BiasInjectorSpec::CoverageFilter { predicate }, 0).unwrap();
        assert_eq!(out.len(), oracle);
        assert!((out.len() as f64 / 5000.0 - 0.6).abs() < 0.03);
    }

    #[test]
    fn coverage_filter_unknown_feature_errors() {
        let d = generate_population(&base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.1))), 1)
            .unwrap()
            .dataset;
        let predicate = Predicate::Numeric { feature: "ghost".into(), op: crate::predicate::CompareOp::Gt, value: 0.0 };
        let err = inject_bias(&d, &BiasInjectorSpec::CoverageFilter { predicate }, 0).unwrap_err();
        assert!(matches!(err, SynthError::UnknownFeature(ref f) if f == "ghost"));
    }

    #[test]
    fn label_noise_flips_at_group_rate() {
        let mut spec = base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.2)));
        spec.n = 5000;
        let d = generate_population(&spec, 21).unwrap().dataset;
        let out = inject_bias(
            &d,
            &BiasInjectorSpec::LabelNoise {
                rates: [("A".to_string(), 0.2)].into(),
                default_rate: 0.0,
                window_days: 730,
                feature: None,
            },
            3,
        )
        .unwrap();
        let label = |s: &SubjectRecord| {
            s.events
                .iter()
                .any(|e| e.kind == EventKind::Conviction && e.day > s.anchor_day && e.day <= s.anchor_day + 730)
        };
        let (mut flips_a, mut n_a, mut flips_b) = (0, 0, 0);
        for (a, b) in d.subjects.iter().zip(&out.subjects) {
            let flipped = label(a) != label(b);
            if a.group == "A" {
                n_a += 1;
                flips_a += flipped as usize;
            } else {
                flips_b += flipped as usize;
            }
        }
        assert_eq!(flips_b, 0);
        assert!((flips_a as f64 / n_a as f64 - 0.2).abs() < 0.03);
    }

    #[test]
    fn out_of_range_rate_rejected() {
        let d = generate_population(&base_spec(HazardSpec::Piecewise(PiecewiseHazard::constant(0.1))), 1)
            .unwrap()
            .dataset;
        let err = inject_bias(
            &d,
            &BiasInjectorSpec::Missingness {
                feature: "x".into(),
                mechanism: Mechanism::Mcar,
                rate: 1.5,
                condition_feature: None,
                slope: 1.0,
            },
            0,
        )
        .unwrap_err();
        assert!(matches!(err, SynthError::RateOutOfRange(_)));
    }
}
