use ndarray::{Array2, ArrayView2};

use crate::dynamics::DynamicsModel;
use crate::envs::Environment;
use crate::error::{Error, Result};

/// Batched one-step predictor used for simulated rollouts. Implementations
/// clip actions to the environment box before predicting.
pub trait TransitionModel: Sync {
    fn state_dim(&self) -> usize;

    fn predict_batch(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl TransitionModel for DynamicsModel {
    fn state_dim(&self) -> usize {
        DynamicsModel::state_dim(self)
    }

    fn predict_batch(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        DynamicsModel::predict_batch(self, states, actions)
    }
}

/// The environment's own dynamics, for oracle comparisons.
pub struct TrueDynamics<'a>(pub &'a dyn Environment);

impl TransitionModel for TrueDynamics<'_> {
    fn state_dim(&self) -> usize {
        self.0.spec().state_dim
    }

    fn predict_batch(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        let spec = self.0.spec();
        if states.ncols() != spec.state_dim || actions.ncols() != spec.action_dim || states.nrows() != actions.nrows() {
            return Err(Error::shape(
                "true dynamics batch",
                format!("(n, {}) states with (n, {}) actions", spec.state_dim, spec.action_dim),
                format!("{:?} and {:?}", states.dim(), actions.dim()),
            ));
        }
        let mut out = Array2::zeros(states.raw_dim());
        let mut next = vec![0.0; spec.state_dim];
        for ((s, a), mut o) in states.rows().into_iter().zip(actions.rows()).zip(out.rows_mut()) {
            let a = spec.clip_action(&a.to_vec());
            self.0.transition(&s.to_vec(), &a, &mut next);
            o.assign(&ndarray::aview1(&next));
        }
        Ok(out)
    }
}
