//! Class rebalancing of the training matrix toward a target positive rate.

use super::{LabeledMatrix, PipelineError};
use crate::seeded_rng;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    #[default]
    None,
    OversampleMinority,
    UndersampleMajority,
}

/// The positive class is treated as the minority. Oversampling appends
/// positive rows drawn with replacement; undersampling keeps a random
/// subset of negatives in their original order. Either way the result has
/// the smallest change giving `base_rate >= target_rate`.
pub fn resample(m: &LabeledMatrix, method: ResampleMethod, target_rate: f64, seed: u64) -> Result<LabeledMatrix, PipelineError> {
    if method == ResampleMethod::None {
        return Ok(m.clone());
    }
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(PipelineError::InvalidParameter(format!("target_rate {target_rate} not in (0, 1)")));
    }
    let positives: Vec<usize> = (0..m.n_rows()).filter(|&i| m.y[i] == 1).collect();
    if positives.is_empty() {
        return Err(PipelineError::EmptyMinority);
    }
    let p = positives.len() as f64;
    let n = m.n_rows() as f64;
    if p / n >= target_rate {
        return Ok(m.clone());
    }
    let mut rng = seeded_rng(seed);
    let rows: Vec<usize> = match method {
        ResampleMethod::OversampleMinority => {
            let extra = ((target_rate * n - p) / (1.0 - target_rate) - 1e-9).ceil().max(0.0) as usize;
            let mut rows: Vec<usize> = (0..m.n_rows()).collect();
            rows.extend((0..extra).map(|_| positives[rng.random_range(0..positives.len())]));
            rows
        }
        ResampleMethod::UndersampleMajority => {
            let negatives: Vec<usize> = (0..m.n_rows()).filter(|&i| m.y[i] == 0).collect();
            let keep = ((p * (1.0 - target_rate) / target_rate + 1e-9).floor() as usize).min(negatives.len());
            let mut kept = vec![false; m.n_rows()];
            for &i in &positives {
                kept[i] = true;
            }
            for k in sample(&mut rng, negatives.len(), keep) {
                kept[negatives[k]] = true;
            }
            (0..m.n_rows()).filter(|&i| kept[i]).collect()
        }
        ResampleMethod::None => unreachable!(),
    };
    Ok(m.select_rows(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pos: usize, n: usize) -> LabeledMatrix {
        LabeledMatrix {
            rows: (0..n).map(|i| format!("S{i:05}")).collect(),
            columns: vec!["x".into()],
            x: vec![(0..n).map(|i| i as f64).collect()],
            y: (0..n).map(|i| u8::from(i < pos)).collect(),
            encoding: vec![],
        }
    }

    #[test]
    fn oversample_to_half() {
        let m = labels(38, 1000);
        let out = resample(&m, ResampleMethod::OversampleMinority, 0.5, 1).unwrap();
        assert!(out.base_rate() >= 0.5);
        assert!((out.base_rate() - 0.5).abs() <= 1.0 / out.n_rows() as f64);
        assert_eq!(out.n_rows(), 1000 + 924);
    }

    #[test]
    fn undersample_to_half() {
        let m = labels(38, 1000);
        let out = resample(&m, ResampleMethod::UndersampleMajority, 0.5, 1).unwrap();
        assert_eq!(out.n_rows(), 76);
        assert_eq!(out.base_rate(), 0.5);
        assert_eq!(out, resample(&m, ResampleMethod::UndersampleMajority, 0.5, 1).unwrap());
    }

    #[test]
    fn identities_and_errors() {
        let m = labels(38, 1000);
        assert_eq!(resample(&m, ResampleMethod::None, 0.5, 1).unwrap(), m);
        assert_eq!(resample(&m, ResampleMethod::OversampleMinority, 0.03, 1).unwrap(), m);
        assert_eq!(resample(&labels(0, 10), ResampleMethod::OversampleMinority, 0.5, 1), Err(PipelineError::EmptyMinority));
    }
}
