use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One offline evaluation of one method at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub label: String,
    pub seed: u64,
    pub steps: usize,
    pub returns: Vec<f64>,
    pub mean: f64,
}

impl EvalRecord {
    pub fn new(label: &str, seed: u64, steps: usize, returns: Vec<f64>) -> Self {
        let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
        Self {
            label: label.to_string(),
            seed,
            steps,
            returns,
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub steps: usize,
    /// Best checkpoint mean so far, one entry per seed.
    pub best: Vec<f64>,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Running maximum.
pub fn best_so_far(means: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    means
        .iter()
        .map(|&m| {
            best = best.max(m);
            best
        })
        .collect()
}

/// Percentile-bootstrap 95% interval of the mean of `values`.
pub fn bootstrap_ci(values: &[f64], resamples: usize, rng: &mut impl rand::Rng) -> Result<(f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return Err(Error::State("bootstrap needs values and at least one resample".into()));
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok((percentile(&means, 0.025), percentile(&means, 0.975)))
}

/// Linear interpolation between order statistics of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let w = pos - lo as f64;
    // Equal neighbours give that value exactly, so degenerate inputs give a
    // zero-width interval.
    if sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + w * (sorted[hi] - sorted[lo])
    }
}

/// Best-so-far curve across seeds. `records[k]` holds seed k's checkpoints in
/// step order; all seeds must share the same checkpoint steps.
pub fn best_so_far_curve(records: &[Vec<EvalRecord>], resamples: usize, bootstrap_seed: u64) -> Result<Vec<CurvePoint>> {
    let first = records
        .first()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::State("no evaluation records".into()))?;
    let steps: Vec<usize> = first.iter().map(|r| r.steps).collect();
    if !steps.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::State("evaluation records are not sorted by step".into()));
    }
    let mut per_seed = Vec::with_capacity(records.len());
    for seed_records in records {
        if seed_records.iter().map(|r| r.steps).ne(steps.iter().copied()) {
            return Err(Error::State("seeds were evaluated at different checkpoints".into()));
        }
        let means: Vec<f64> = seed_records.iter().map(|r| r.mean).collect();
        per_seed.push(best_so_far(&means));
    }
    steps
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let best: Vec<f64> = per_seed.iter().map(|b| b[i]).collect();
            let mean = best.iter().sum::<f64>() / best.len() as f64;
            let mut r = rng::stream(bootstrap_seed, &[rng::tag::BOOTSTRAP, s as u64]);
            let (ci_low, ci_high) = bootstrap_ci(&best, resamples, &mut r)?;
            Ok(CurvePoint {
                steps: s,
                best,
                mean,
                ci_low,
                ci_high,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(seed: u64, means: &[f64]) -> Vec<EvalRecord> {
        means
            .iter()
            .enumerate()
            .map(|(i, &m)| EvalRecord::new("x", seed, (i + 1) * 100, vec![m]))
            .collect()
    }

    #[test]
    fn running_max_example() {
        let c = best_so_far_curve(&[records(0, &[1.0, 3.0, 2.0])], 100, 0).unwrap();
        let best: Vec<f64> = c.iter().map(|p| p.mean).collect();
        assert_eq!(best, vec![1.0, 3.0, 3.0]);
    }

    #[test]
    fn identical_seeds_give_zero_width() {
        let recs: Vec<_> = (0..5).map(|s| records(s, &[-3.7, 0.1, -2.0])).collect();
        for p in best_so_far_curve(&recs, 1000, 4).unwrap() {
            assert_eq!(p.ci_low, p.ci_high);
            assert_eq!(p.ci_low, p.mean);
        }
    }

    #[test]
    fn bootstrap_contains_mean() {
        let values = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (lo, hi) = bootstrap_ci(&values, 1000, &mut rng::from_seed(0)).unwrap();
        assert!(lo < 3.0 && 3.0 < hi, "({lo}, {hi})");
        // The resampled mean can never leave the data range.
        assert!(lo >= 1.0 && hi <= 5.0);
    }

    #[test]
    fn bootstrap_is_seeded() {
        let recs: Vec<_> = (0..5).map(|s| records(s, &[s as f64, 2.0])).collect();
        assert_eq!(best_so_far_curve(&recs, 1000, 9).unwrap(), best_so_far_curve(&recs, 1000, 9).unwrap());
    }

    #[test]
    fn rejects_empty_and_misaligned() {
        assert!(matches!(best_so_far_curve(&[], 10, 0), Err(Error::State(_))));
        assert!(matches!(best_so_far_curve(&[vec![]], 10, 0), Err(Error::State(_))));
        let a = records(0, &[1.0, 2.0]);
        let b = records(1, &[1.0]);
        assert!(best_so_far_curve(&[a, b], 10, 0).is_err());
    }

    proptest! {
        #[test]
        fn best_so_far_is_monotone(means in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let b = best_so_far(&means);
            prop_assert!(b.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(b.iter().zip(&means).all(|(b, m)| b >= m));
        }
    }
}
