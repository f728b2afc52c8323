use std::path::Path;

use ndarray::Array2;

use crate::envs::{Trajectory, Transition};
use crate::error::{Error, Result};

/// Append-only store of every transition collected during an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    state_dim: usize,
    action_dim: usize,
    transitions: Vec<Transition>,
}

/// Transitions packed row-wise for batched arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub next_states: Array2<f64>,
}

impl Batch {
    pub fn from_transitions<'a>(
        state_dim: usize,
        action_dim: usize,
        items: impl ExactSizeIterator<Item = &'a Transition>,
    ) -> Self {
        let n = items.len();
        let mut states = Array2::zeros((n, state_dim));
        let mut actions = Array2::zeros((n, action_dim));
        let mut next_states = Array2::zeros((n, state_dim));
        for (i, t) in items.enumerate() {
            states.row_mut(i).assign(&ndarray::aview1(&t.state));
            actions.row_mut(i).assign(&ndarray::aview1(&t.action));
            next_states.row_mut(i).assign(&ndarray::aview1(&t.next_state));
        }
        Self {
            states,
            actions,
            next_states,
        }
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TransitionDataset {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            transitions: Vec::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Keeps the first `len` transitions.
    pub fn truncate(&mut self, len: usize) {
        self.transitions.truncate(len);
    }

    pub fn push(&mut self, transition: Transition) -> Result<()> {
        if transition.state.len() != self.state_dim || transition.next_state.len() != self.state_dim {
            return Err(Error::shape("dataset state", self.state_dim, transition.state.len()));
        }
        if transition.action.len() != self.action_dim {
            return Err(Error::shape("dataset action", self.action_dim, transition.action.len()));
        }
        self.transitions.push(transition);
        Ok(())
    }

    pub fn extend_from_trajectory(&mut self, trajectory: &Trajectory) -> Result<()> {
        for t in trajectory.transitions() {
            self.push(t.clone())?;
        }
        Ok(())
    }

    /// `batch_size` transitions drawn uniformly with replacement.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut impl rand::Rng) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::State("cannot sample from an empty dataset".into()));
        }
        let indices: Vec<usize> = (0..batch_size)
            .map(|_| rng.random_range(0..self.len()))
            .collect();
        Ok(self.batch_of(&indices))
    }

    pub fn batch_of(&self, indices: &[usize]) -> Batch {
        Batch::from_transitions(
            self.state_dim,
            self.action_dim,
            indices.iter().map(|&i| &self.transitions[i]),
        )
    }

    pub fn as_batch(&self) -> Batch {
        Batch::from_transitions(self.state_dim, self.action_dim, self.transitions.iter())
    }

    /// CSV with header `s0..,a0..,ns0..,reward`, one transition per row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
        let mut header: Vec<String> = Vec::new();
        header.extend((0..self.state_dim).map(|i| format!("s{i}")));
        header.extend((0..self.action_dim).map(|i| format!("a{i}")));
        header.extend((0..self.state_dim).map(|i| format!("ns{i}")));
        header.push("reward".into());
        w.write_record(&header).map_err(|e| Error::format(path, e))?;
        for t in &self.transitions {
            let row: Vec<String> = t
                .state
                .iter()
                .chain(&t.action)
                .chain(&t.next_state)
                .chain(std::iter::once(&t.reward))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(|e| Error::format(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, state_dim: usize, action_dim: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
        let width = 2 * state_dim + action_dim + 1;
        let mut out = Self::new(state_dim, action_dim);
        for record in r.records() {
            let record = record.map_err(|e| Error::format(path, e))?;
            if record.len() != width {
                return Err(Error::format(
                    path,
                    format!("expected {width} columns, found {}", record.len()),
                ));
            }
            let values = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, e))?;
            out.transitions.push(Transition {
                state: values[..state_dim].to_vec(),
                action: values[state_dim..state_dim + action_dim].to_vec(),
                next_state: values[state_dim + action_dim..2 * state_dim + action_dim].to_vec(),
                reward: values[width - 1],
            });
        }
        Ok(out)
    }
}
