//! Torque-limited pendulum swing-up.
//!
//! State `[theta, theta_dot]` with `theta = 0` upright; `theta` is kept
//! unwrapped in the state so the dynamics are smooth everywhere. Action is a
//! torque in `[-2, 2]`.
//!
//! ```text
//! theta_ddot = 3 g / (2 l) * sin(theta) + 3 / (m l^2) * u
//! theta_dot' = clamp(theta_dot + theta_ddot * dt, -8, 8)
//! theta'     = theta + theta_dot' * dt
//! reward     = -(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2),  wrap into (-pi, pi]
//! ```
//!
//! `g = 10`, `m = 1`, `l = 1`, `dt = 0.05`, episodes of 200 steps. Initial
//! state: `theta ~ U(-pi, pi)`, `theta_dot ~ U(-1, 1)`.

use std::f64::consts::PI;

use rand::Rng as _;

use super::{EnvSpec, Environment};
use crate::rng;

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const HORIZON: usize = 200;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
}

impl Pendulum {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec::new("pendulum", 2, vec![-MAX_TORQUE], vec![MAX_TORQUE], HORIZON).with_angle_dims(&[0]),
        }
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng::from_seed(seed);
        vec![rng.random_range(-PI..PI), rng.random_range(-1.0..1.0)]
    }

    fn transition(&self, state: &[f64], action: &[f64], next: &mut [f64]) {
        let (theta, theta_dot) = (state[0], state[1]);
        let u = action[0];
        let theta_ddot =
            3.0 * GRAVITY / (2.0 * LENGTH) * theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        let new_theta_dot = (theta_dot + theta_ddot * DT).clamp(-MAX_SPEED, MAX_SPEED);
        next[0] = theta + new_theta_dot * DT;
        next[1] = new_theta_dot;
    }

    fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let theta = wrap_angle(state[0]);
        -(theta * theta + 0.1 * state[1] * state[1] + 0.001 * action[0] * action[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(2.0 * PI + 0.5) - 0.5).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn upright_equilibrium_is_fixed_and_maximal() {
        let env = Pendulum::new();
        let (next, reward) = env.step(&[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(next, vec![0.0, 0.0]);
        assert_eq!(reward, 0.0);
    }

    #[test]
    fn hanging_down_reward() {
        // -(pi^2 + 0 + 0)
        let env = Pendulum::new();
        let r = env.reward_fn(&[PI, 0.0], &[0.0]).unwrap();
        assert!((r + PI * PI).abs() < 1e-12);
        // the worst possible angle term; any velocity or torque only lowers it
        assert!(r <= env.reward_fn(&[PI - 0.3, 0.0], &[0.0]).unwrap());
    }

    #[test]
    fn speed_is_clamped() {
        let env = Pendulum::new();
        let (next, _) = env.step(&[1.0, 7.99], &[2.0]).unwrap();
        assert_eq!(next[1], MAX_SPEED);
    }
}
