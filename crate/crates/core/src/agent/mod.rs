//! Model-free learner: Gaussian policy, value baseline, advantage estimation,
//! trust-region policy updates and on-policy rollout collection.

mod advantage;
mod features;
mod policy;
mod rollout;
mod trpo;
mod value;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use advantage::{
    compute_returns_and_advantages, discounted_returns, discounted_returns_with_tail, gae, gae_with_tail, normalize,
    Advantages,
};
pub use features::Features;
pub use policy::{kl_rows, GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
pub use rollout::{collect_rollouts, run_episode, Behavior, Deterministic, Episode, Stochastic, UniformRandom};
pub use trpo::{
    conjugate_gradient, surrogate, surrogate_grad, trpo_update, FisherOperator, TrpoBatch, TrpoConfig,
    TrpoReport,
};
pub use value::{stack_rows, ValueFitConfig, ValueFunction};

use crate::envs::EnvSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub trpo: TrpoConfig,
    pub value_fit: ValueFitConfig,
    pub normalize_advantages: bool,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    /// Initial policy standard deviation as a fraction of the action half-range.
    pub init_std_fraction: f64,
    pub episodes_per_iteration: usize,
    /// Continue returns past the episode cutoff with the value estimate.
    #[serde(default = "yes")]
    pub bootstrap_cutoff: bool,
}

fn yes() -> bool {
    true
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            trpo: TrpoConfig::default(),
            value_fit: ValueFitConfig::default(),
            normalize_advantages: true,
            policy_hidden: vec![32, 32],
            value_hidden: vec![32, 32],
            init_std_fraction: 0.5,
            episodes_per_iteration: 4,
            bootstrap_cutoff: true,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("discount must lie in (0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.trpo.max_kl > 0.0) {
            return Err(Error::Config(format!("KL radius must be positive, got {}", self.trpo.max_kl)));
        }
        if !(self.init_std_fraction > 0.0) {
            return Err(Error::Config("initial policy std must be positive".into()));
        }
        if self.episodes_per_iteration == 0 {
            return Err(Error::Config("episodes per iteration must be positive".into()));
        }
        Ok(())
    }
}

/// Policy and value function trained together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub value: ValueFunction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub trpo: TrpoReport,
    pub value_loss: f64,
    pub mean_return: f64,
}

impl Agent {
    pub fn new(spec: &EnvSpec, config: &AgentConfig, rng: &mut impl rand::Rng) -> Self {
        let features = Features::for_spec(spec);
        let log_std: Vec<f64> = spec
            .action_low
            .iter()
            .zip(&spec.action_high)
            .map(|(l, h)| (0.5 * (h - l) * config.init_std_fraction).ln())
            .collect();
        let policy = GaussianPolicy::new(
            features.clone(),
            spec.action_dim,
            &config.policy_hidden,
            &log_std,
            rng,
        );
        let value = ValueFunction::new(features, &config.value_hidden, config.value_fit.adam, rng);
        Self { policy, value }
    }

    /// Advantages against the current value function, one TRPO step, then a
    /// value regression onto the discounted returns.
    pub fn update(
        &mut self,
        episodes: &[Episode],
        config: &AgentConfig,
        rng: &mut impl rand::Rng,
    ) -> Result<UpdateReport> {
        let trajectories: Vec<_> = episodes.iter().map(|e| e.trajectory.clone()).collect();
        let adv = compute_returns_and_advantages(
            &trajectories,
            &self.value,
            config.gamma,
            config.lambda,
            config.bootstrap_cutoff,
        )?;
        let states: Vec<Vec<f64>> = trajectories
            .iter()
            .flat_map(|t| t.transitions().iter().map(|tr| tr.state.clone()))
            .collect();
        let actions: Vec<Vec<f64>> = episodes.iter().flat_map(|e| e.raw_actions.iter().cloned()).collect();
        let states = stack_rows(&states, self.policy.state_dim());
        let actions: Array2<f64> = stack_rows(&actions, self.policy.action_dim());
        let advantages = Array1::from(if config.normalize_advantages {
            adv.normalized.clone()
        } else {
            adv.raw.clone()
        });
        let old_log_prob = self.policy.log_prob_batch(states.view(), actions.view())?;
        let batch = TrpoBatch {
            states: states.view(),
            actions: actions.view(),
            advantages: advantages.view(),
            old_log_prob: old_log_prob.view(),
        };
        let trpo = trpo_update(&mut self.policy, &batch, &config.trpo)?;
        let returns = Array1::from(adv.returns);
        let value_loss = self.value.fit(states.view(), returns.view(), &config.value_fit, rng)?;
        let mean_return = episodes.iter().map(|e| e.trajectory.total_reward()).sum::<f64>()
            / episodes.len().max(1) as f64;
        Ok(UpdateReport {
            trpo,
            value_loss,
            mean_return,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;
    use crate::rng;

    #[test]
    fn rejects_bad_config() {
        let mut c = AgentConfig { gamma: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        c.gamma = 0.99;
        c.trpo.max_kl = 0.0;
        assert!(c.validate().is_err());
        assert!(AgentConfig::default().validate().is_ok());
    }

    #[test]
    fn improves_on_lqr() {
        let env = make_env("lqr").unwrap();
        let config = AgentConfig::default();
        let mut agent = Agent::new(env.spec(), &config, &mut rng::from_seed(0));
        let mut r = rng::from_seed(1);
        let eval = |agent: &Agent| {
            let mut r = rng::from_seed(99);
            collect_rollouts(env.as_ref(), &mut Deterministic(&agent.policy), 20 * 50, &mut r)
                .unwrap()
                .iter()
                .map(|e| e.trajectory.total_reward())
                .sum::<f64>()
                / 20.0
        };
        let before = eval(&agent);
        for _ in 0..40 {
            let eps = collect_rollouts(env.as_ref(), &mut Stochastic(&agent.policy), 4 * 50, &mut r).unwrap();
            let rep = agent.update(&eps, &config, &mut r).unwrap();
            if rep.trpo.accepted {
                assert!(rep.trpo.kl <= 1.5 * config.trpo.max_kl);
            }
        }
        let after = eval(&agent);
        assert!(after > before, "{before} -> {after}");
    }
}
