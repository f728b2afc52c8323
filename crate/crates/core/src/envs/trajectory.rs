use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One environment step `(s, a, s', r)`; `action` is the clipped action that
/// was actually applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.state
            .iter()
            .chain(&self.action)
            .chain(&self.next_state)
            .all(|v| v.is_finite())
            && self.reward.is_finite()
    }
}

/// Ordered, chained sequence of transitions from one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a transition, enforcing that it starts where the last one ended.
    pub fn push(&mut self, transition: Transition) -> Result<()> {
        if let Some(last) = self.transitions.last() {
            if last.next_state != transition.state {
                return Err(Error::State(
                    "transition does not chain onto the trajectory".into(),
                ));
            }
        }
        self.transitions.push(transition);
        Ok(())
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn is_chained(&self) -> bool {
        self.transitions
            .windows(2)
            .all(|w| w[0].next_state == w[1].state)
    }
}
