use rand::Rng as _;

use super::policy::GaussianPolicy;
use crate::envs::{Environment, Trajectory, Transition};
use crate::error::Result;
use crate::rng::Rng;

/// Something that chooses actions in the real environment.
pub trait Behavior {
    fn act(&mut self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

/// Samples from the Gaussian policy.
pub struct Stochastic<'a>(pub &'a GaussianPolicy);

impl Behavior for Stochastic<'_> {
    fn act(&mut self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.0.sample_action(state, rng)
    }
}

/// Executes the policy mean.
pub struct Deterministic<'a>(pub &'a GaussianPolicy);

impl Behavior for Deterministic<'_> {
    fn act(&mut self, state: &[f64], _rng: &mut Rng) -> Result<Vec<f64>> {
        self.0.mean_action(state)
    }
}

/// Uniform draws from the action box.
pub struct UniformRandom {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl UniformRandom {
    pub fn for_env(env: &dyn Environment) -> Self {
        Self {
            low: env.spec().action_low.clone(),
            high: env.spec().action_high.clone(),
        }
    }
}

impl Behavior for UniformRandom {
    fn act(&mut self, _state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(self
            .low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| rng.random_range(*l..*h))
            .collect())
    }
}

/// One episode plus the actions exactly as the behaviour produced them
/// (before the environment clipped them).
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub trajectory: Trajectory,
    pub raw_actions: Vec<Vec<f64>>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }
}

/// Runs a full episode of the environment's horizon from `reset(reset_seed)`.
pub fn run_episode(
    env: &dyn Environment,
    behavior: &mut dyn Behavior,
    reset_seed: u64,
    rng: &mut Rng,
) -> Result<Episode> {
    let horizon = env.spec().horizon;
    let mut state = env.reset(reset_seed);
    let mut trajectory = Trajectory::new();
    let mut raw_actions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let raw = behavior.act(&state, rng)?;
        let (next, reward) = env.step(&state, &raw)?;
        trajectory.push(Transition {
            action: env.spec().clip_action(&raw),
            state: std::mem::take(&mut state),
            next_state: next.clone(),
            reward,
        })?;
        raw_actions.push(raw);
        state = next;
    }
    Ok(Episode {
        trajectory,
        raw_actions,
    })
}

/// Whole episodes until at least `n_steps` steps have been taken. Reset seeds
/// are drawn from `rng`.
pub fn collect_rollouts(
    env: &dyn Environment,
    behavior: &mut dyn Behavior,
    n_steps: usize,
    rng: &mut Rng,
) -> Result<Vec<Episode>> {
    let mut episodes = Vec::new();
    let mut steps = 0;
    while steps < n_steps {
        let seed: u64 = rng.random();
        let ep = run_episode(env, behavior, seed, rng)?;
        steps += ep.len();
        episodes.push(ep);
    }
    Ok(episodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::features::Features;
    use crate::envs::{make_env, Pendulum};
    use crate::rng;

    #[test]
    fn horizon_steps_is_one_episode() {
        let env = Pendulum::new();
        let mut b = UniformRandom::for_env(&env);
        let eps = collect_rollouts(&env, &mut b, env.spec().horizon, &mut rng::from_seed(0)).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].len(), env.spec().horizon);
        assert!(eps[0].trajectory.is_chained());
    }

    #[test]
    fn uniform_actions_center_on_box() {
        let env = make_env("pendulum").unwrap();
        let mut b = UniformRandom::for_env(env.as_ref());
        let eps = collect_rollouts(env.as_ref(), &mut b, 50_000, &mut rng::from_seed(1)).unwrap();
        let actions: Vec<f64> = eps.iter().flat_map(|e| e.raw_actions.iter().map(|a| a[0])).collect();
        let n = actions.len() as f64;
        let mean = actions.iter().sum::<f64>() / n;
        // U(-2, 2) has standard deviation 4 / sqrt(12)
        let sigma = 4.0 / 12f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / n.sqrt());
    }

    #[test]
    fn seeded_rollouts_repeat() {
        let env = make_env("cartpole").unwrap();
        let p = GaussianPolicy::new(Features::for_spec(env.spec()), 1, &[8], &[0.0], &mut rng::from_seed(2));
        let run = || collect_rollouts(env.as_ref(), &mut Stochastic(&p), 450, &mut rng::from_seed(3)).unwrap();
        let a = run();
        assert_eq!(a.len(), 3);
        assert_eq!(a, run());
    }

    #[test]
    fn stored_actions_are_clipped() {
        let env = Pendulum::new();
        let mut p = GaussianPolicy::new(Features::for_spec(env.spec()), 1, &[8], &[2.0], &mut rng::from_seed(4));
        p.set_log_std(&[2.0]);
        let ep = run_episode(&env, &mut Stochastic(&p), 5, &mut rng::from_seed(5)).unwrap();
        assert!(ep.raw_actions.iter().any(|a| a[0].abs() > 2.0));
        assert!(ep.trajectory.transitions().iter().all(|t| t.action[0].abs() <= 2.0));
    }
}
