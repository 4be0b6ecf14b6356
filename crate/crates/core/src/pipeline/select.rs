//! Variable selection over the encoded design.

use super::{LabeledMatrix, PipelineError};
use crate::hash::path_seed;
use crate::models::logistic::{fit_l1_logistic, fit_logistic_from};
use crate::seeded_rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Deviance penalty per added parameter in forward stepwise selection.
pub const STEPWISE_PENALTY: f64 = 2.0;
pub const DEFAULT_REPLICATES: usize = 100;
pub const DEFAULT_INCLUSION: f64 = 0.8;

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}
fn default_inclusion() -> f64 {
    DEFAULT_INCLUSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionMethod {
    None,
    ForwardStepwise,
    BootstrapStability {
        #[serde(default = "default_replicates")]
        replicates: usize,
        #[serde(default = "default_inclusion")]
        threshold: f64,
    },
    L1Path {
        penalty: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected column indices, ascending.
    pub columns: Vec<usize>,
    /// Nothing was selected; the model is fitted on the intercept alone.
    pub intercept_only: bool,
    /// Per-column bootstrap selection frequency, when bootstrapped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
}

/// Greedy forward selection on `deviance + 2 * #parameters`; stops when no
/// candidate strictly improves the criterion. Ties go to the lowest column
/// index. Returns columns in the order they were added.
pub fn forward_stepwise(x: &[Vec<f64>], y: &[u8]) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut current = fit_logistic_from(&[], y, 0.0, None);
    let mut criterion = current.deviance + STEPWISE_PENALTY;
    loop {
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        let mut start = current.theta();
        start.push(0.0);
        for c in 0..x.len() {
            if chosen.contains(&c) {
                continue;
            }
            let cols: Vec<&[f64]> = chosen.iter().chain(std::iter::once(&c)).map(|&j| x[j].as_slice()).collect();
            let fit = fit_logistic_from(&cols, y, 0.0, Some(&start));
            let crit = fit.deviance + STEPWISE_PENALTY * (cols.len() + 1) as f64;
            if crit.is_finite() && best.as_ref().is_none_or(|(b, _, _)| crit < *b) {
                best = Some((crit, c, fit.theta()));
            }
        }
        match best {
            Some((crit, c, theta)) if crit < criterion => {
                chosen.push(c);
                criterion = crit;
                current.intercept = theta[0];
                current.coefficients = theta[1..].to_vec();
            }
            _ => return chosen,
        }
    }
}

/// Always returns a selection; an empty one sets `intercept_only`.
pub fn select_variables(m: &LabeledMatrix, method: &SelectionMethod, seed: u64) -> Result<Selection, PipelineError> {
    let p = m.n_cols();
    if p == 0 {
        return Err(PipelineError::InvalidParameter("variable selection needs at least one candidate column".into()));
    }
    let mut frequencies = None;
    let mut columns: Vec<usize> = match *method {
        SelectionMethod::None => (0..p).collect(),
        SelectionMethod::ForwardStepwise => forward_stepwise(&m.x, &m.y),
        SelectionMethod::BootstrapStability { replicates, threshold } => {
            if replicates < 10 {
                return Err(PipelineError::InvalidParameter(format!("bootstrap needs >= 10 replicates, got {replicates}")));
            }
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(PipelineError::InvalidParameter(format!("inclusion threshold {threshold} not in (0, 1]")));
            }
            let n = m.n_rows();
            let picks: Vec<Vec<usize>> = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = seeded_rng(path_seed(seed, r as u64));
                    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    let boot = m.select_rows(&idx);
                    forward_stepwise(&boot.x, &boot.y)
                })
                .collect();
            let mut counts = vec![0usize; p];
            for pick in &picks {
                for &c in pick {
                    counts[c] += 1;
                }
            }
            let cut = threshold * replicates as f64 - 1e-9;
            frequencies = Some(counts.iter().map(|&c| c as f64 / replicates as f64).collect());
            (0..p).filter(|&c| counts[c] as f64 >= cut).collect()
        }
        SelectionMethod::L1Path { penalty } => {
            if !(penalty >= 0.0 && penalty.is_finite()) {
                return Err(PipelineError::InvalidParameter(format!("L1 penalty {penalty} must be >= 0")));
            }
            let cols: Vec<&[f64]> = m.x.iter().map(Vec::as_slice).collect();
            let beta = fit_l1_logistic(&cols, &m.y, penalty);
            (0..p).filter(|&c| beta[c] != 0.0).collect()
        }
    };
    columns.sort_unstable();
    if !columns.is_empty() && columns.iter().all(|&c| is_constant(&m.x[c])) {
        return Err(PipelineError::DegenerateDesign);
    }
    Ok(Selection { intercept_only: columns.is_empty(), columns, frequencies })
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::logistic::sigmoid;

    fn planted(n: usize, informative: &[f64], noise: usize, seed: u64) -> LabeledMatrix {
        let mut rng = seeded_rng(seed);
        let p = informative.len() + noise;
        let x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let y = (0..n)
            .map(|i| {
                let eta: f64 = informative.iter().enumerate().map(|(j, b)| b * x[j][i]).sum();
                u8::from(rng.random::<f64>() < sigmoid(eta))
            })
            .collect();
        LabeledMatrix {
            rows: (0..n).map(|i| format!("S{i}")).collect(),
            columns: (0..p).map(|j| format!("x{j}")).collect(),
            x,
            y,
            encoding: vec![],
        }
    }

    #[test]
    fn none_keeps_all_columns() {
        let m = planted(100, &[1.0], 11, 1);
        let s = select_variables(&m, &SelectionMethod::None, 0).unwrap();
        assert_eq!(s.columns, (0..12).collect::<Vec<_>>());
        assert!(!s.intercept_only);
    }

    #[test]
    fn stepwise_finds_strong_signal() {
        let m = planted(2000, &[2.0, -2.0], 3, 2);
        let s = forward_stepwise(&m.x, &m.y);
        assert!(s.starts_with(&[0, 1]) || s.starts_with(&[1, 0]), "{s:?}");
    }

    #[test]
    fn l1_selects_signal_only_at_moderate_penalty() {
        let m = planted(2000, &[2.0], 3, 3);
        let s = select_variables(&m, &SelectionMethod::L1Path { penalty: 0.05 }, 0).unwrap();
        assert_eq!(s.columns, vec![0]);
    }

    #[test]
    fn bootstrap_rejects_bad_parameters() {
        let m = planted(50, &[1.0], 1, 4);
        let bad = SelectionMethod::BootstrapStability { replicates: 5, threshold: 0.8 };
        assert!(select_variables(&m, &bad, 0).is_err());
        let bad = SelectionMethod::BootstrapStability { replicates: 10, threshold: 0.0 };
        assert!(select_variables(&m, &bad, 0).is_err());
    }

    #[test]
    fn constant_selection_is_degenerate() {
        let mut m = planted(50, &[], 1, 5);
        m.x[0] = vec![1.0; 50];
        assert_eq!(select_variables(&m, &SelectionMethod::None, 0), Err(PipelineError::DegenerateDesign));
    }

    #[test]
    fn payload_defaults() {
        let s: SelectionMethod = serde_json::from_str(r#"{"method":"bootstrap_stability"}"#).unwrap();
        assert_eq!(s, SelectionMethod::BootstrapStability { replicates: 100, threshold: 0.8 });
    }
}
