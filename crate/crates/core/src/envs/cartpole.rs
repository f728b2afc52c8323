//! Cart-pole balancing with a continuous force.
//!
//! State `[x, x_dot, theta, theta_dot]`, `theta = 0` upright. Action is a
//! horizontal force in `[-10, 10]` N. Semi-implicit Euler with `dt = 0.02`:
//!
//! ```text
//! temp       = (F + m_p l theta_dot^2 sin(theta)) / (m_c + m_p)
//! theta_acc  = (g sin(theta) - cos(theta) temp) / (l (4/3 - m_p cos^2(theta) / (m_c + m_p)))
//! x_acc      = temp - m_p l theta_acc cos(theta) / (m_c + m_p)
//! x_dot'     = x_dot + dt x_acc;          x'     = x + dt x_dot'
//! theta_dot' = theta_dot + dt theta_acc;  theta' = theta + dt theta_dot'
//! ```
//!
//! `g = 9.8`, `m_c = 1.0`, `m_p = 0.1`, `l = 0.5` (half pole length).
//! Reward is `1 - 0.05 |x|` while `|wrap(theta)| <= 0.4`, and `-10` once the
//! pole has fallen past that angle. Episodes always run 200 steps. Initial
//! state: every coordinate `~ U(-0.05, 0.05)`.

use rand::Rng as _;

use super::pendulum::wrap_angle;
use super::{EnvSpec, Environment};
use crate::rng;

pub const GRAVITY: f64 = 9.8;
pub const MASS_CART: f64 = 1.0;
pub const MASS_POLE: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const DT: f64 = 0.02;
pub const MAX_FORCE: f64 = 10.0;
pub const FALL_ANGLE: f64 = 0.4;
pub const FALL_REWARD: f64 = -10.0;
pub const HORIZON: usize = 200;

#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
}

impl CartPole {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec::new("cartpole", 4, vec![-MAX_FORCE], vec![MAX_FORCE], HORIZON).with_angle_dims(&[2]),
        }
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng::from_seed(seed);
        (0..4).map(|_| rng.random_range(-0.05..0.05)).collect()
    }

    fn transition(&self, state: &[f64], action: &[f64], next: &mut [f64]) {
        let (x, x_dot, theta, theta_dot) = (state[0], state[1], state[2], state[3]);
        let force = action[0];
        let total_mass = MASS_CART + MASS_POLE;
        let pole_mass_length = MASS_POLE * HALF_LENGTH;
        let (sin, cos) = theta.sin_cos();

        let temp = (force + pole_mass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;

        let new_x_dot = x_dot + DT * x_acc;
        let new_theta_dot = theta_dot + DT * theta_acc;
        next[0] = x + DT * new_x_dot;
        next[1] = new_x_dot;
        next[2] = theta + DT * new_theta_dot;
        next[3] = new_theta_dot;
    }

    fn reward(&self, state: &[f64], _action: &[f64]) -> f64 {
        if wrap_angle(state[2]).abs() > FALL_ANGLE {
            FALL_REWARD
        } else {
            1.0 - 0.05 * state[0].abs()
        }
    }
}
