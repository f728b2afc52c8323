//! Deterministic continuous-control environments.
//!
//! Every environment is a pure function of `(state, action)`: `step` clips the
//! action into the box, then applies the closed-form dynamics and reward. The
//! reward is exposed on its own so planners can score model-predicted states.

mod cartpole;
mod lqr;
mod pendulum;
mod pointmass;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cartpole::CartPole;
pub use lqr::{lqr_optimal_action, riccati_gain, Lqr, LqrInit, RiccatiSolution};
pub use pendulum::{wrap_angle, Pendulum};
pub use pointmass::PointMass;
pub use trajectory::{Trajectory, Transition};

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Fixed episode length `T`.
    pub horizon: usize,
    /// State coordinates holding unwrapped angles. Learners see them as
    /// `(cos, sin)` pairs.
    #[serde(default)]
    pub angle_dims: Vec<usize>,
}

impl EnvSpec {
    pub fn new(
        name: &str,
        state_dim: usize,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        horizon: usize,
    ) -> Self {
        assert_eq!(action_low.len(), action_high.len());
        assert!(action_low.iter().zip(&action_high).all(|(l, h)| l < h));
        assert!(state_dim > 0 && !action_low.is_empty() && horizon >= 1);
        Self {
            name: name.to_string(),
            state_dim,
            action_dim: action_low.len(),
            action_low,
            action_high,
            horizon,
            angle_dims: Vec::new(),
        }
    }

    pub fn with_angle_dims(mut self, dims: &[usize]) -> Self {
        assert!(dims.iter().all(|&d| d < self.state_dim));
        self.angle_dims = dims.to_vec();
        self
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        let mut out = action.to_vec();
        self.clip_in_place(&mut out);
        out
    }

    pub fn clip_in_place(&self, action: &mut [f64]) {
        for ((a, lo), hi) in action.iter_mut().zip(&self.action_low).zip(&self.action_high) {
            *a = a.clamp(*lo, *hi);
        }
    }

    pub fn action_center(&self) -> Vec<f64> {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }
}

/// A deterministic environment `(S, A, R, f)`.
///
/// Implementors provide the raw dynamics and reward for an action that is
/// already inside the bounds; the provided methods validate and clip.
pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Initial state, deterministic given `seed`.
    fn reset(&self, seed: u64) -> Vec<f64>;

    /// Writes `f(state, action)` into `next`. `action` is already clipped.
    fn transition(&self, state: &[f64], action: &[f64], next: &mut [f64]);

    /// `R(state, action)` for an already-clipped action.
    fn reward(&self, state: &[f64], action: &[f64]) -> f64;

    fn as_lqr(&self) -> Option<&Lqr> {
        None
    }

    /// Clips the action and returns `(f(s, a), R(s, a))`.
    fn step(&self, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, f64)> {
        let action = self.checked_action(state, action)?;
        let mut next = vec![0.0; state.len()];
        self.transition(state, &action, &mut next);
        let reward = self.reward(state, &action);
        Ok((next, reward))
    }

    /// Reward of `(state, clip(action))`; identical to the reward from `step`.
    fn reward_fn(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let action = self.checked_action(state, action)?;
        Ok(self.reward(state, &action))
    }

    #[doc(hidden)]
    fn checked_action(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let spec = self.spec();
        if state.len() != spec.state_dim {
            return Err(Error::shape("step state", spec.state_dim, state.len()));
        }
        if action.len() != spec.action_dim {
            return Err(Error::shape("step action", spec.action_dim, action.len()));
        }
        if !state.iter().chain(action).all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite input to {} step",
                spec.name
            )));
        }
        Ok(spec.clip_action(action))
    }
}

/// Names of the built-in environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    Pendulum,
    Cartpole,
    Pointmass,
    Lqr,
}

impl EnvName {
    pub const ALL: [EnvName; 4] = [
        EnvName::Pendulum,
        EnvName::Cartpole,
        EnvName::Pointmass,
        EnvName::Lqr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::Pendulum => "pendulum",
            EnvName::Cartpole => "cartpole",
            EnvName::Pointmass => "pointmass",
            EnvName::Lqr => "lqr",
        }
    }

    pub fn build(self) -> Box<dyn Environment> {
        match self {
            EnvName::Pendulum => Box::new(Pendulum::new()),
            EnvName::Cartpole => Box::new(CartPole::new()),
            EnvName::Pointmass => Box::new(PointMass::new()),
            EnvName::Lqr => Box::new(Lqr::new()),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown environment `{s}`")))
    }
}

/// Builds an environment by name.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    Ok(name.parse::<EnvName>()?.build())
}

/// Initial state of a named environment.
pub fn reset(name: &str, seed: u64) -> Result<Vec<f64>> {
    Ok(make_env(name)?.reset(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_env_is_config_error() {
        assert!(matches!(make_env("mujoco"), Err(Error::Config(_))));
        assert!(matches!(reset("ant", 0), Err(Error::Config(_))));
    }

    #[test]
    fn reset_is_seeded() {
        for name in EnvName::ALL {
            let env = name.build();
            assert_eq!(env.reset(11), env.reset(11), "{name}");
            assert_eq!(env.reset(11).len(), env.spec().state_dim);
        }
        assert_ne!(reset("pendulum", 5).unwrap(), reset("pendulum", 6).unwrap());
    }

    #[test]
    fn step_rejects_non_finite_and_bad_shapes() {
        let env = Pendulum::new();
        assert!(matches!(
            env.step(&[f64::NAN, 0.0], &[0.0]),
            Err(Error::Numerical(_))
        ));
        assert!(matches!(
            env.step(&[0.0, 0.0], &[f64::INFINITY]),
            Err(Error::Numerical(_))
        ));
        assert!(matches!(env.step(&[0.0], &[0.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn step_clips_actions() {
        let env = Pendulum::new();
        let s = [0.3, -0.2];
        assert_eq!(env.step(&s, &[50.0]).unwrap(), env.step(&s, &[2.0]).unwrap());
        assert_eq!(
            env.reward_fn(&s, &[-50.0]).unwrap(),
            env.reward_fn(&s, &[-2.0]).unwrap()
        );
    }

    #[test]
    fn reward_fn_matches_step_reward() {
        for name in EnvName::ALL {
            let env = name.build();
            let s = env.reset(3);
            let a: Vec<f64> = env.spec().action_high.iter().map(|h| 0.37 * h).collect();
            let (_, r) = env.step(&s, &a).unwrap();
            assert_eq!(r, env.reward_fn(&s, &a).unwrap(), "{name}");
        }
    }
}
