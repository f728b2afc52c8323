//! Model predictive control guided by a model-free learner.
//!
//! A forward dynamics model, a Gaussian policy and a value function are trained
//! jointly from environment interaction. At evaluation time a sampling-based
//! planner draws candidate action sequences from the policy, rolls them through
//! the learned model, scores them with the task reward plus a value-function
//! terminal term, and executes the mean of the best few sequences' first action.

pub mod agent;
pub mod dynamics;
pub mod envs;
pub mod harness;
pub mod error;
pub mod nn;
pub mod planner;
pub mod rng;

pub use error::{Error, Result};
