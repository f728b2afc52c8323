use crate::agent::{run_episode, Behavior, Deterministic, GaussianPolicy, Stochastic, ValueFunction};
use crate::dynamics::DynamicsModel;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::planner::{MpcBehavior, PlanContext, PlannerConfig};
use crate::rng::{self, tag};

use super::config::Method;

/// Frozen networks an evaluation acts with.
#[derive(Clone, Copy, Default)]
pub struct Snapshots<'a> {
    pub policy: Option<&'a GaussianPolicy>,
    pub value: Option<&'a ValueFunction>,
    pub model: Option<&'a DynamicsModel>,
}

/// Seeds of one evaluation. Episode `k` starts from a reset derived from
/// `(resets, k)` and draws its action noise from `(actions, k)`, so methods
/// sharing `resets` face the same start states.
#[derive(Debug, Clone, Copy)]
pub struct EvalSeeds {
    pub resets: u64,
    pub actions: u64,
}

impl EvalSeeds {
    /// Seeds for `label` at a training checkpoint.
    pub fn at_checkpoint(seed: u64, steps: usize, label: &str) -> Self {
        Self {
            resets: rng::mix(seed, &[tag::EVAL, tag::RESET, steps as u64]),
            actions: rng::mix(seed, &[tag::EVAL, rng::hash_str(label), steps as u64]),
        }
    }
}

/// Undiscounted return of each of `episodes` full episodes.
pub fn evaluate_offline(
    env: &dyn Environment,
    snapshots: &Snapshots<'_>,
    method: Method,
    planner: &PlannerConfig,
    episodes: usize,
    seeds: EvalSeeds,
) -> Result<Vec<f64>> {
    let policy = || {
        snapshots
            .policy
            .ok_or_else(|| Error::Config(format!("{method} evaluation needs a policy")))
    };
    let mut behavior: Box<dyn Behavior + '_> = match method {
        Method::MfS => Box::new(Stochastic(policy()?)),
        Method::MfD => Box::new(Deterministic(policy()?)),
        Method::MpcMfrl | Method::MpcRandom | Method::MpcCem => {
            let model = snapshots
                .model
                .ok_or_else(|| Error::Config(format!("{method} evaluation needs a dynamics model")))?;
            Box::new(MpcBehavior {
                context: PlanContext {
                    env,
                    model,
                    policy: snapshots.policy,
                    value: snapshots.value,
                },
                config: planner,
            })
        }
    };
    (0..episodes as u64)
        .map(|k| {
            let reset = rng::mix(seeds.resets, &[k]);
            let mut r = rng::stream(seeds.actions, &[k]);
            Ok(run_episode(env, behavior.as_mut(), reset, &mut r)?.trajectory.total_reward())
        })
        .collect()
}
