use serde::{Deserialize, Serialize};

use super::value::{stack_rows, ValueFunction};
use crate::envs::Trajectory;
use crate::error::{Error, Result};

/// Per-step targets for one batch of trajectories, concatenated in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advantages {
    pub returns: Vec<f64>,
    /// GAE estimates before normalization.
    pub raw: Vec<f64>,
    /// `raw` shifted to mean 0 and scaled to standard deviation 1.
    pub normalized: Vec<f64>,
}

/// `G_t = r_t + gamma * G_{t+1}` with `G` zero after the last step.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    discounted_returns_with_tail(rewards, gamma, 0.0)
}

/// As [`discounted_returns`] with `G` equal to `tail` after the last step.
pub fn discounted_returns_with_tail(rewards: &[f64], gamma: f64, tail: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = tail;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}

/// Generalized advantage estimates for one episode. `values[t]` is
/// `V(s_t)`; the value after the final step is taken as zero.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    gae_with_tail(rewards, values, 0.0, gamma, lambda)
}

/// As [`gae`] with `tail` standing in for the value after the final step.
pub fn gae_with_tail(rewards: &[f64], values: &[f64], tail: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len());
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let next = values.get(t + 1).copied().unwrap_or(tail);
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
    }
    out
}

/// Shifts to mean 0 and divides by the population standard deviation.
/// A constant input maps to all zeros.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Returns and GAE advantages for a batch. With `bootstrap_cutoff`, every
/// trajectory is treated as cut off by the time limit rather than ended, and
/// the value of its final next state continues both recursions.
pub fn compute_returns_and_advantages(
    trajectories: &[Trajectory],
    value_fn: &ValueFunction,
    gamma: f64,
    lambda: f64,
    bootstrap_cutoff: bool,
) -> Result<Advantages> {
    if trajectories.iter().all(Trajectory::is_empty) {
        return Err(Error::State("no transitions to score".into()));
    }
    let mut returns = Vec::new();
    let mut raw = Vec::new();
    for traj in trajectories {
        if traj.is_empty() {
            continue;
        }
        if !traj.is_chained() {
            return Err(Error::State("trajectory is not chained".into()));
        }
        let rewards = traj.rewards();
        let states: Vec<Vec<f64>> = traj.transitions().iter().map(|t| t.state.clone()).collect();
        let values = value_fn
            .predict_batch(stack_rows(&states, value_fn.state_dim()).view())?
            .to_vec();
        let tail = match (bootstrap_cutoff, traj.transitions().last()) {
            (true, Some(last)) => value_fn.predict(&last.next_state)?,
            _ => 0.0,
        };
        returns.extend(discounted_returns_with_tail(&rewards, gamma, tail));
        raw.extend(gae_with_tail(&rewards, &values, tail, gamma, lambda));
    }
    let normalized = normalize(&raw);
    Ok(Advantages {
        returns,
        raw,
        normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn single_step_return() {
        assert_eq!(discounted_returns(&[1.0], 0.9), vec![1.0]);
    }

    #[test]
    fn three_step_return() {
        assert_eq!(discounted_returns(&[1.0, 1.0, 1.0], 0.5)[0], 1.75);
    }

    #[test]
    fn constant_input_normalizes_to_zero() {
        assert_eq!(normalize(&[2.0, 2.0, 2.0]), vec![0.0; 3]);
    }

    #[test]
    fn lambda_one_is_return_minus_value() {
        use rand::Rng as _;
        let mut r = rng::from_seed(0);
        for _ in 0..20 {
            let n = r.random_range(1..40);
            let rewards: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..1.0)).collect();
            let values: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
            let g = discounted_returns(&rewards, 0.97);
            let a = gae(&rewards, &values, 0.97, 1.0);
            for t in 0..n {
                assert!((a[t] - (g[t] - values[t])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lambda_zero_is_one_step_error() {
        let a = gae(&[1.0, 2.0], &[0.5, 0.25], 0.9, 0.0);
        assert_eq!(a, vec![1.0 + 0.9 * 0.25 - 0.5, 2.0 - 0.25]);
    }

    #[test]
    fn tail_continues_the_recursion() {
        let g = discounted_returns_with_tail(&[1.0, 2.0], 0.5, 8.0);
        assert_eq!(g, vec![1.0 + 0.5 * 2.0 + 0.25 * 8.0, 2.0 + 0.5 * 8.0]);
        let a = gae_with_tail(&[1.0], &[0.5], 4.0, 0.9, 0.0);
        assert_eq!(a, vec![1.0 + 0.9 * 4.0 - 0.5]);
    }

    #[test]
    fn zero_tail_is_the_plain_recursion() {
        let rewards = [0.3, -1.2, 2.5];
        assert_eq!(discounted_returns_with_tail(&rewards, 0.9, 0.0), discounted_returns(&rewards, 0.9));
        assert_eq!(gae_with_tail(&rewards, &[0.1, 0.2, 0.3], 0.0, 0.9, 0.8), gae(&rewards, &[0.1, 0.2, 0.3], 0.9, 0.8));
    }

    proptest! {
        #[test]
        fn recursion_matches_direct_sum(rewards in prop::collection::vec(-10.0f64..10.0, 1..60), gamma in 0.01f64..0.999) {
            let g = discounted_returns(&rewards, gamma);
            for t in 0..rewards.len() {
                let direct: f64 = rewards[t..].iter().enumerate().map(|(i, r)| gamma.powi(i as i32) * r).sum();
                prop_assert!((g[t] - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
            }
        }

        #[test]
        fn normalization_ignores_positive_scale(values in prop::collection::vec(-10.0f64..10.0, 2..50), c in 0.01f64..100.0) {
            let a = normalize(&values);
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let b = normalize(&scaled);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
