//! Acceptance criteria, one line per criterion. Run with
//! `cargo test --release --test acceptance`.

use multiverse::data::{split_inconsistency_holdout, EventKind};
use multiverse::hash::fnv1a64;
use multiverse::inconsistency::{bin_disagreement, build_score_matrix, multiplicity_metrics, BinningScheme};
use multiverse::metrics::{auc, fairness_report, lift_at};
use multiverse::models::logistic::{penalized_log_likelihood, penalized_score};
use multiverse::models::{fit_model, predict_proba, ModelSpec};
use multiverse::pipeline::{derive_outcome, prepare, OutcomeDefinition, PrepPlan};
use multiverse::report::artifacts::{build_manifest, manifest_bytes};
use multiverse::report::{execute, write_artifacts, RunConfig, RunOptions};
use multiverse::synth::{calibrate_hazard, generate_population, PopulationSpec, RateTarget};
use multiverse::universe::UniverseSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

const WINDOWS: [(f64, i64, f64); 3] = [(3.5, 1277, 0.15), (6.0, 2190, 0.31), (10.0, 3650, 0.43)];

fn base_rates_and_auc_spread() -> Check {
    let start = Instant::now();
    let targets: Vec<RateTarget> = WINDOWS.iter().map(|&(_, d, r)| RateTarget { window_days: d, rate: r }).collect();
    // the closed-form hazard reproduces the triple exactly for a homogeneous cohort
    let closed = calibrate_hazard(&targets).map_err(|e| e.to_string())?;
    for &(_, d, r) in &WINDOWS {
        if (1.0 - closed.survival(d as f64) - r).abs() > 1e-12 {
            return Err(format!("closed-form hazard misses {r} at {d} days"));
        }
    }
    let spec: PopulationSpec = serde_json::from_value(serde_json::json!({
        "n": 20000,
        "groups": [{"name": "a", "p": 0.5}, {"name": "b", "p": 0.5, "intercept": 0.2}],
        "features": [
            {"name": "age", "numeric": {"mean": 33.0, "sd": 10.0}},
            {"name": "employment", "categorical": {"levels": [["employed", 0.6], ["unemployed", 0.4]]}}
        ],
        "history": {"arrests_min": 0, "arrests_max": 10, "as_features": true},
        "coefficients": {"age": -0.04, "employment=unemployed": 0.5, "prior_arrests": 0.15},
        "hazard": {"calibrate_to": serde_json::to_value(&targets).unwrap()}
    }))
    .map_err(|e| e.to_string())?;
    let pop = generate_population(&spec, 1).map_err(|e| e.to_string())?.dataset;
    let n = pop.len() as f64;
    let mut details = Vec::new();
    let mut ok = true;
    for &(years, days, rate) in &WINDOWS {
        let y = derive_outcome(&pop, &OutcomeDefinition::new(vec![EventKind::Conviction], days)).y;
        let observed = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let sd = (rate * (1.0 - rate) / n).sqrt();
        let z = (observed - rate) / sd;
        ok &= z.abs() <= 2.0;
        details.push(format!("{years}y={observed:.4} (z={z:+.2})"));
    }
    // one logistic model trained on the 3.5-year label, scored against all three
    let (train, holdout) = split_inconsistency_holdout(&pop, 0.5, 1, None).map_err(|e| e.to_string())?;
    let plan = PrepPlan { outcome: OutcomeDefinition::new(vec![EventKind::Conviction], WINDOWS[0].1), ..PrepPlan::default() };
    let prepared = prepare(&train, &holdout, &plan, 1, 50).map_err(|e| e.to_string())?;
    let fitted = fit_model(&prepared.train, &ModelSpec::Logistic { l2: 0.0 }, 1).map_err(|e| e.to_string())?;
    let scores = predict_proba(&fitted, &prepared.holdout).map_err(|e| e.to_string())?;
    let aucs: Vec<f64> = WINDOWS
        .iter()
        .map(|&(_, days, _)| {
            let y = derive_outcome(&holdout, &OutcomeDefinition::new(vec![EventKind::Conviction], days)).y;
            auc(&scores, &y).unwrap_or(f64::NAN)
        })
        .collect();
    let spread = aucs.iter().cloned().fold(f64::MIN, f64::max) - aucs.iter().cloned().fold(f64::MAX, f64::min);
    let elapsed = start.elapsed();
    ok &= spread > 0.01 && elapsed < Duration::from_secs(30);
    details.push(format!(
        "auc={:.4}/{:.4}/{:.4} spread={spread:.4} in {:.1}s",
        aucs[0],
        aucs[1],
        aucs[2],
        elapsed.as_secs_f64()
    ));
    ensure(ok, details.join(", "))
}

fn auc_brute(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut doubled, mut p, mut q) = (0u64, 0u64, 0u64);
    for (i, &yi) in labels.iter().enumerate() {
        if yi == 1 {
            p += 1;
            for (j, &yj) in labels.iter().enumerate() {
                if yj == 0 {
                    doubled += if scores[i] > scores[j] {
                        2
                    } else if scores[i] == scores[j] {
                        1
                    } else {
                        0
                    };
                }
            }
        } else {
            q += 1;
        }
    }
    doubled as f64 / (2 * p * q) as f64
}

fn random_labelled(rng: &mut ChaCha8Rng, n: usize, levels: u32) -> (Vec<f64>, Vec<u8>) {
    loop {
        let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels)).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if y.contains(&0) && y.contains(&1) {
            return (s, y);
        }
    }
}

fn auc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..1000 {
        let n = rng.random_range(2..=500);
        let levels = if trial % 2 == 0 { 10 } else { 1_000_000 };
        let (s, y) = random_labelled(&mut rng, n, levels);
        let got = auc(&s, &y).map_err(|e| e.to_string())?;
        let want = auc_brute(&s, &y);
        if got != want {
            return Err(format!("trial {trial}: rank-sum {got} != pairwise {want}"));
        }
    }
    Ok("1000/1000 instances exactly equal".into())
}

fn lift_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_ratio: f64 = 0.0;
    for trial in 0..1000 {
        let n = rng.random_range(2..=400);
        let (s, y) = random_labelled(&mut rng, n, 20);
        let ids: Vec<String> = (0..n).map(|i| format!("S{:05}", (i * 7919) % 100_003)).collect();
        let k = rng.random_range(0.01..=1.0);
        let l = lift_at(&s, &y, &ids, k).map_err(|e| e.to_string())?;
        let top = ((k * n as f64) - 1e-9).ceil().max(1.0) as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then_with(|| ids[a].cmp(&ids[b])));
        let hits = order[..top].iter().filter(|&&i| y[i] == 1).count() as f64;
        let base = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        let want = hits / top as f64 / base;
        if l.top_n != top || (l.lift - want).abs() > 1e-12 {
            return Err(format!("trial {trial}: lift {} vs direct {want}", l.lift));
        }
        if l.lift > 1.0 / base + 1e-12 {
            return Err(format!("trial {trial}: lift {} exceeds 1/base_rate {}", l.lift, 1.0 / base));
        }
        max_ratio = max_ratio.max(l.lift * base);
    }
    let n = 10_000;
    let s: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("R{i:05}")).collect();
    let mut random = Vec::new();
    for k in [0.1, 0.2] {
        random.push(lift_at(&s, &y, &ids, k).map_err(|e| e.to_string())?.lift);
    }
    ensure(
        random.iter().all(|l| (l - 1.0).abs() <= 0.1) && max_ratio <= 1.0 + 1e-12,
        format!(
            "1000/1000 match direct count, max lift*base_rate={max_ratio:.3}; random lift@0.1={:.3} lift@0.2={:.3}",
            random[0], random[1]
        ),
    )
}

fn impossibility() -> Check {
    // calibrated scores, unequal base rates: each score level gets exactly
    // round(s * m) positives
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (g, levels) in [("a", [0.1, 0.3]), ("b", [0.3, 0.5])] {
        for s in levels {
            let m = 1000;
            let pos = (s * m as f64).round() as usize;
            for i in 0..m {
                scores.push(s);
                labels.push(u8::from(i < pos));
                groups.push(g.to_string());
            }
        }
    }
    let r = fairness_report(&scores, &labels, &groups, 0.5, 30).map_err(|e| e.to_string())?;
    let max_ece = r.groups.values().map(|g| g.ece).fold(0.0, f64::max);
    let part1 = max_ece <= 0.01 && r.gaps.balance_positive >= 0.15;
    let rates: Vec<f64> = r.groups.values().map(|g| g.base_rate).collect();

    // equal base rates and perfect scores
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for g in ["a", "b"] {
        for i in 0..1000 {
            let y = u8::from(i < 300);
            scores.push(f64::from(y));
            labels.push(y);
            groups.push(g.to_string());
        }
    }
    let p = fairness_report(&scores, &labels, &groups, 0.5, 30).map_err(|e| e.to_string())?;
    let p_ece = p.groups.values().map(|g| g.ece).fold(0.0, f64::max);
    let part2 = p_ece <= 0.01 && p.gaps.balance_positive <= 0.01 && p.gaps.balance_negative <= 0.01;
    ensure(
        part1 && part2,
        format!(
            "base rates {:.2}/{:.2}: max group ece={max_ece:.4}, balance+ gap={:.4}; equal rates + perfect scores: ece={p_ece:.4}, balance+={:.4}, balance-={:.4}",
            rates[0], rates[1], r.gaps.balance_positive, p.gaps.balance_positive, p.gaps.balance_negative
        ),
    )
}

fn multiplicity_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        let n = rng.random_range(1..=20);
        let k = rng.random_range(1..=20);
        let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let subjects: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
        let canonical: Vec<u64> = (0..k as u64).collect();
        let results = cols.iter().enumerate().map(|(j, c)| (j as u64, Ok(c.clone()))).collect();
        let mut m = build_score_matrix(subjects, &canonical, results).map_err(|e| e.to_string())?;
        for j in 0..k {
            m.admissible[j] = rng.random::<f64>() < 0.8 || j == 0;
        }
        let b = 0usize;
        let t = rng.random_range(0.1..0.9);
        let got = multiplicity_metrics(&m, b as u64, t).map_err(|e| e.to_string())?;
        // exhaustive: every (admissible path, subject) pair
        let decide = |j: usize, i: usize| cols[j][i] >= t;
        let mut any = vec![false; n];
        let mut worst = 0usize;
        for j in (0..k).filter(|&j| m.admissible[j]) {
            let flips = (0..n).filter(|&i| decide(j, i) != decide(b, i)).count();
            worst = worst.max(flips);
            for (i, a) in any.iter_mut().enumerate() {
                *a |= decide(j, i) != decide(b, i);
            }
        }
        let amb = any.iter().filter(|&&a| a).count() as f64 / n as f64;
        let disc = worst as f64 / n as f64;
        if got.ambiguity != amb || got.discrepancy != disc {
            return Err(format!("trial {trial}: ({}, {}) vs exhaustive ({amb}, {disc})", got.ambiguity, got.discrepancy));
        }
    }
    Ok("1000/1000 random matrices (<= 20x20) match exhaustive enumeration".into())
}

const DIMS: [&str; 9] = [
    "outcome_definition",
    "imputation",
    "rare_grouping",
    "resampling",
    "subpopulation",
    "variable_selection",
    "model_family",
    "model_seed",
    "binning",
];

fn universe_json(sizes: &[usize], constraints: &[Vec<(usize, Vec<usize>)>]) -> serde_json::Value {
    let dims: Vec<serde_json::Value> = sizes
        .iter()
        .enumerate()
        .map(|(d, &k)| {
            let opts: Vec<serde_json::Value> = (0..k)
                .map(|o| {
                    serde_json::json!({"name": format!("opt{o}"), "parameters": {"i": o},
                        "reasonableness": {"rationale": "r", "provenance": "domain_knowledge"}})
                })
                .collect();
            serde_json::json!({"name": DIMS[d], "options": opts})
        })
        .collect();
    let cons: Vec<serde_json::Value> = constraints
        .iter()
        .map(|c| {
            let ex: serde_json::Map<String, serde_json::Value> = c
                .iter()
                .map(|(d, o)| (DIMS[*d].to_string(), serde_json::json!(o.iter().map(|i| format!("opt{i}")).collect::<Vec<_>>())))
                .collect();
            serde_json::json!({"exclude": ex})
        })
        .collect();
    serde_json::json!({"dimensions": dims, "constraints": cons})
}

fn enumeration_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut total_paths = 0usize;
    let mut trials = 0;
    while trials < 100 {
        let d = rng.random_range(1..=9);
        let sizes: Vec<usize> = (0..d).map(|_| rng.random_range(1..=5)).collect();
        let raw: usize = sizes.iter().product();
        if raw > 10_000 {
            continue;
        }
        trials += 1;
        let constraints: Vec<Vec<(usize, Vec<usize>)>> = (0..rng.random_range(0..4))
            .map(|_| {
                let dims: BTreeSet<usize> = (0..rng.random_range(1..=d.min(3))).map(|_| rng.random_range(0..d)).collect();
                dims.into_iter()
                    .map(|dim| {
                        let opts: BTreeSet<usize> =
                            (0..rng.random_range(1..=sizes[dim])).map(|_| rng.random_range(0..sizes[dim])).collect();
                        (dim, opts.into_iter().collect())
                    })
                    .collect()
            })
            .collect();
        let u: UniverseSpec = serde_json::from_value(universe_json(&sizes, &constraints)).map_err(|e| e.to_string())?;
        let mut expected = Vec::new();
        for mut code in 0..raw {
            let mut idx = vec![0; d];
            for k in (0..d).rev() {
                idx[k] = code % sizes[k];
                code /= sizes[k];
            }
            if !constraints.iter().any(|c| c.iter().all(|(dim, o)| o.contains(&idx[*dim]))) {
                expected.push(idx);
            }
        }
        let got: Vec<Vec<usize>> = match u.enumerate_paths() {
            Ok(p) => p.into_iter().map(|p| p.option_indices).collect(),
            Err(_) => Vec::new(),
        };
        if got != expected {
            return Err(format!("universe {sizes:?}: {} paths vs brute force {}", got.len(), expected.len()));
        }
        total_paths += got.len();
    }
    let big: UniverseSpec = serde_json::from_value(universe_json(&[10, 10, 10, 10], &[])).map_err(|e| e.to_string())?;
    let ids: BTreeSet<u64> = big.enumerate_paths().map_err(|e| e.to_string())?.iter().map(|p| p.path_id).collect();
    ensure(
        ids.len() == 10_000,
        format!("100/100 universes match ({total_paths} paths); {} distinct ids over 10^4 paths", ids.len()),
    )
}

fn tree_snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn determinism() -> Check {
    let fixture_dir = crate_dir().join("tests").join("fixtures");
    let text = std::fs::read_to_string(fixture_dir.join("small.json")).map_err(|e| e.to_string())?;
    let config = RunConfig::from_json(&text).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |cfg: &RunConfig, workers: usize, out: &Path| -> Result<u64, String> {
        let opts = RunOptions { workers, config_dir: fixture_dir.clone(), dataset_files: None };
        let state = execute(cfg, &opts).map_err(|e| e.to_string())?;
        write_artifacts(&state, out).map_err(|e| e.to_string())
    };
    let h1 = run(&config, 1, &tmp.path().join("a"))?;
    let h2 = run(&config, 1, &tmp.path().join("b"))?;
    let h8 = run(&config, 8, &tmp.path().join("c"))?;
    let a = tree_snapshot(&tmp.path().join("a"));
    let same_twice = a == tree_snapshot(&tmp.path().join("b")) && h1 == h2;
    let same_workers = a == tree_snapshot(&tmp.path().join("c")) && h1 == h8;
    // flip one digit of the master seed
    let at = text.find("\"master_seed\": 7").ok_or("fixture seed not found")? + "\"master_seed\": ".len();
    let mut bytes = text.into_bytes();
    bytes[at] = b'8';
    let mutated = RunConfig::from_json(std::str::from_utf8(&bytes).unwrap()).map_err(|e| e.to_string())?;
    let opts = RunOptions { workers: 2, config_dir: fixture_dir, dataset_files: None };
    let state = execute(&mutated, &opts).map_err(|e| e.to_string())?;
    let hm = manifest_bytes(&build_manifest(&state, Default::default())).map_err(|e| e.to_string())?.1;
    let hb = {
        let state = execute(&config, &opts).map_err(|e| e.to_string())?;
        manifest_bytes(&build_manifest(&state, Default::default())).map_err(|e| e.to_string())?.1
    };
    ensure(
        same_twice && same_workers && hm != hb,
        format!(
            "{} files; twice identical={same_twice}; workers 1 vs 8 identical={same_workers}; mutated-byte manifest hash {:016x} vs {:016x}",
            a.len(),
            hm,
            hb
        ),
    )
}

fn seed_fork() -> Check {
    let start = Instant::now();
    let seeds: Vec<serde_json::Value> = (1..=5)
        .map(|i| {
            serde_json::json!({"name": format!("seed{i}"), "parameters": {},
                "reasonableness": {"rationale": "arbitrary seed", "provenance": "domain_knowledge"}})
        })
        .collect();
    let cfg = serde_json::json!({
        "master_seed": 11,
        "synth": {"population": {
            "n": 2000,
            "groups": [{"name": "a", "p": 0.5}, {"name": "b", "p": 0.5}],
            "features": [
                {"name": "age", "numeric": {"mean": 33.0, "sd": 10.0}},
                {"name": "score_a", "numeric": {"mean": 0.0, "sd": 1.0}},
                {"name": "score_b", "numeric": {"mean": 0.0, "sd": 1.0}},
                {"name": "employment", "categorical": {"levels": [["employed", 0.6], ["unemployed", 0.4]]}}
            ],
            "history": {"arrests_min": 0, "arrests_max": 10, "as_features": true},
            "coefficients": {"age": -0.04, "score_a": 0.5, "score_b": 0.3, "employment=unemployed": 0.5, "prior_arrests": 0.15},
            "hazard": {"calibrate_to": [{"window_days": 1277, "rate": 0.3}]}
        }},
        "universe": {"dimensions": [
            {"name": "outcome_definition", "options": [{"name": "conviction_3_5y",
                "parameters": {"failure_events": ["conviction"], "window_years": 3.5},
                "reasonableness": {"rationale": "r", "provenance": "domain_knowledge"}}]},
            {"name": "model_family", "options": [{"name": "forest",
                "parameters": {"family": "forest", "n_trees": 100, "max_depth": 8, "min_leaf": 10},
                "reasonableness": {"rationale": "r", "provenance": "data_driven"}}]},
            {"name": "model_seed", "options": seeds}
        ]},
        "rashomon": {"metric": "auc", "mode": "absolute", "value": 0.5}
    });
    let config: RunConfig = serde_json::from_value(cfg).map_err(|e| e.to_string())?;
    let state = execute(&config, &RunOptions { workers: 8, ..RunOptions::default() }).map_err(|e| e.to_string())?;
    let max_range = state.profiles.iter().map(|p| p.range).fold(0.0, f64::max);
    let aucs: Vec<f64> = state.records.iter().filter_map(|r| r.outcome.as_ref().ok()).map(|o| o.metrics.auc).collect();
    let auc_gap = aucs.iter().cloned().fold(f64::MIN, f64::max) - aucs.iter().cloned().fold(f64::MAX, f64::min);
    let elapsed = start.elapsed();
    ensure(
        aucs.len() == 5 && max_range > 0.01 && auc_gap < 0.02 && elapsed < Duration::from_secs(60),
        format!(
            "{} seeds, max subject range={max_range:.4}, max pairwise AUC diff={auc_gap:.4}, {:.1}s",
            aucs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn binning_disagreement() -> Check {
    let three = BinningScheme::equal_width("three_level", 3, None).map_err(|e| e.to_string())?;
    let five = BinningScheme::equal_width("five_level", 5, None).map_err(|e| e.to_string())?;
    let steps = 10_000;
    let hits: Vec<f64> = (0..=steps)
        .map(|i| i as f64 / steps as f64)
        .filter(|&s| bin_disagreement(s, &three, &five).ordinal_disagreement)
        .collect();
    let at = bin_disagreement(0.68, &three, &five);
    ensure(
        !hits.is_empty() && at.ordinal_disagreement,
        format!(
            "{} of {} grid scores disagree; 0.68 -> {} ({:.2}) vs {} ({:.2})",
            hits.len(),
            steps + 1,
            at.label_a,
            at.position_a,
            at.label_b,
            at.position_b
        ),
    )
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(5..=40);
        let p = rng.random_range(1..=5);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let theta: Vec<f64> = (0..=p).map(|_| rng.random_range(-1.5..1.5)).collect();
        let l2 = [0.0, 0.1, 2.0][rng.random_range(0..3)];
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let g = penalized_score(&theta, &refs, &y, l2);
        let h = 1e-5;
        let fd: Vec<f64> = (0..=p)
            .map(|k| {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[k] += h;
                dn[k] -= h;
                (penalized_log_likelihood(&up, &refs, &y, l2) - penalized_log_likelihood(&dn, &refs, &y, l2)) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
    }
    ensure(worst < 1e-6, format!("max relative error {worst:.2e} over 100 instances"))
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let path = crate_dir().join("configs").join("example.json");
    let config = RunConfig::load(&path).map_err(|e| e.to_string())?;
    let opts = RunOptions { workers: 8, config_dir: path.parent().unwrap().to_path_buf(), dataset_files: None };
    let state = execute(&config, &opts).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("out");
    write_artifacts(&state, &out).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut missing: Vec<&str> = [
        "dataset.csv",
        "events.csv",
        "manifest.json",
        "manifest.hash",
        "paths.csv",
        "subjects.csv",
        "matrix.csv",
        "datasheet.txt",
    ]
    .into_iter()
    .filter(|f| !out.join(f).is_file())
    .collect();
    let cards = std::fs::read_dir(out.join("cards")).map(|d| d.count()).unwrap_or(0);
    let curves = std::fs::read_dir(out.join("curves")).map(|d| d.count()).unwrap_or(0);
    let admissible = state.records.iter().filter(|r| r.admissible).count();
    if cards != admissible {
        missing.push("cards");
    }
    if curves == 0 {
        missing.push("curves");
    }
    let manifest = std::fs::read(out.join("manifest.json")).unwrap_or_default();
    let sidecar = std::fs::read_to_string(out.join("manifest.hash")).unwrap_or_default();
    let sidecar_ok = sidecar.trim() == format!("{:016x}", fnv1a64(&manifest));
    let abstain = state.profiles.iter().filter(|p| p.abstain).count();
    ensure(
        state.universe.admissible_paths >= 500
            && state.dataset.len() == 5000
            && missing.is_empty()
            && sidecar_ok
            && abstain >= 1
            && elapsed < Duration::from_secs(600),
        format!(
            "n={}, {} admissible paths, {} in Rashomon set, {} failed, {cards} cards, {curves} curve files, missing={missing:?}, abstain={abstain}/{}, {:.1}s on {} workers",
            state.dataset.len(),
            state.universe.admissible_paths,
            admissible,
            state.matrix.failures.len(),
            state.profiles.len(),
            elapsed.as_secs_f64(),
            state.workers
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("base-rate/window reproduction", base_rates_and_auc_spread),
        ("AUC rank-sum oracle", auc_oracle),
        ("lift oracle", lift_oracle),
        ("calibration/balance impossibility", impossibility),
        ("ambiguity/discrepancy oracle", multiplicity_oracle),
        ("path enumeration oracle", enumeration_oracle),
        ("determinism suite", determinism),
        ("seed-fork demonstration", seed_fork),
        ("binning disagreement", binning_disagreement),
        ("logistic gradient check", gradient_check),
        ("end-to-end desk-scale multiverse", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  [{:>2}] {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  [{:>2}] {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
