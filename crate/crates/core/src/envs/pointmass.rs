//! Planar point mass driven to the origin.
//!
//! State `[px, py, vx, vy]`, action is an acceleration in `[-1, 1]^2`.
//! Semi-implicit Euler with `dt = 0.05`: `v' = v + a dt`, `p' = p + v' dt`.
//! Reward `-|p - goal| - 0.01 |a|^2` with the goal at the origin. Episodes run
//! 100 steps; initial position `~ U(-1, 1)^2`, initial velocity zero.

use rand::Rng as _;

use super::{EnvSpec, Environment};
use crate::rng;

pub const DT: f64 = 0.05;
pub const GOAL: [f64; 2] = [0.0, 0.0];
pub const HORIZON: usize = 100;

#[derive(Debug, Clone)]
pub struct PointMass {
    spec: EnvSpec,
}

impl PointMass {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec::new("pointmass", 4, vec![-1.0, -1.0], vec![1.0, 1.0], HORIZON),
        }
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng::from_seed(seed);
        vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0, 0.0]
    }

    fn transition(&self, state: &[f64], action: &[f64], next: &mut [f64]) {
        let vx = state[2] + action[0] * DT;
        let vy = state[3] + action[1] * DT;
        next[0] = state[0] + vx * DT;
        next[1] = state[1] + vy * DT;
        next[2] = vx;
        next[3] = vy;
    }

    fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let dx = state[0] - GOAL[0];
        let dy = state[1] - GOAL[1];
        -(dx * dx + dy * dy).sqrt() - 0.01 * (action[0] * action[0] + action[1] * action[1])
    }
}
