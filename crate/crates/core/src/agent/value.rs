use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::Features;
use crate::error::{Error, Result};
use crate::nn::{heads, Adam, AdamConfig, Mlp};

/// Smallest target scale used when rescaling the output layer.
const TARGET_STD_FLOOR: f64 = 1e-2;

/// State-value estimate `V(s) = mean + std * net(s)`.
///
/// Each fit refits `(mean, std)` to the regression targets and rewrites the
/// output layer so the represented function does not jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    features: Features,
    net: Mlp,
    target_mean: f64,
    target_std: f64,
    optimizer: Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueFitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for ValueFitConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            adam: AdamConfig::default(),
        }
    }
}

impl ValueFunction {
    pub fn new(features: Features, hidden: &[usize], adam: AdamConfig, rng: &mut impl rand::Rng) -> Self {
        let net = Mlp::new(features.dim(), hidden, 1, 1.0, 0.01, rng);
        Self::from_net(features, net, adam)
    }

    pub fn from_net(features: Features, net: Mlp, adam: AdamConfig) -> Self {
        assert_eq!(net.input_dim(), features.dim());
        assert_eq!(net.output_dim(), 1);
        let optimizer = Adam::new(adam, net.num_params());
        Self {
            features,
            net,
            target_mean: 0.0,
            target_std: 1.0,
            optimizer,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn output_scale(&self) -> (f64, f64) {
        (self.target_mean, self.target_std)
    }

    pub fn state_dim(&self) -> usize {
        self.features.state_dim()
    }

    pub fn predict_batch(&self, states: ArrayView2<f64>) -> Result<Array1<f64>> {
        if states.ncols() != self.state_dim() {
            return Err(Error::shape("value state", self.state_dim(), states.ncols()));
        }
        let out = self.net.forward(self.features.apply(states).view())?;
        Ok(out.column(0).mapv(|y| self.target_mean + self.target_std * y))
    }

    pub fn predict(&self, state: &[f64]) -> Result<f64> {
        let view = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|_| Error::shape("value state", self.state_dim(), state.len()))?;
        Ok(self.predict_batch(view)?[0])
    }

    fn rescale_output(&mut self, mean: f64, std: f64) {
        let (m0, s0) = (self.target_mean, self.target_std);
        let last = self.net.layers_mut().last_mut().expect("at least one layer");
        last.weights *= s0 / std;
        last.bias.mapv_inplace(|b| (b * s0 + m0 - mean) / std);
        self.target_mean = mean;
        self.target_std = std;
    }

    /// Adam regression of `V(s)` onto `returns` by shuffled minibatches.
    /// Returns the mean squared error over all states after fitting, in raw
    /// units; with zero epochs nothing changes and the current error is
    /// returned.
    pub fn fit(
        &mut self,
        states: ArrayView2<f64>,
        returns: ArrayView1<f64>,
        config: &ValueFitConfig,
        rng: &mut impl rand::Rng,
    ) -> Result<f64> {
        if states.nrows() != returns.len() {
            return Err(Error::shape("value targets", states.nrows(), returns.len()));
        }
        if returns.is_empty() {
            return Err(Error::State("no value targets".into()));
        }
        if config.epochs == 0 {
            return self.mse(states, returns);
        }
        if config.batch_size == 0 {
            return Err(Error::Config("value batch size must be positive".into()));
        }
        if !returns.iter().all(|r| r.is_finite()) {
            return Err(Error::Numerical("non-finite value target".into()));
        }
        let mean = returns.mean().expect("non-empty");
        let std = returns.std(0.0).max(TARGET_STD_FLOOR);
        self.rescale_output(mean, std);

        let inputs = self.features.apply(states);
        let targets = returns.mapv(|r| (r - mean) / std).insert_axis(Axis(1));
        let mut order: Vec<usize> = (0..returns.len()).collect();
        for _ in 0..config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(config.batch_size) {
                let x = inputs.select(Axis(0), chunk);
                let y = targets.select(Axis(0), chunk);
                let (_, grad) = self.net_loss_and_grad(x.view(), y.view())?;
                let mut params = self.net.params();
                self.optimizer.step(
                    params.as_slice_mut().expect("contiguous"),
                    grad.as_slice().expect("contiguous"),
                )?;
                self.net.set_params(params.as_slice().expect("contiguous"))?;
            }
        }
        self.mse(states, returns)
    }

    /// Squared error of the network against `returns` in the current output
    /// scale, `mean_i ((V(s_i) - R_i) / std)^2`, and its gradient with respect
    /// to the network parameters.
    pub fn loss_and_grad(&self, states: ArrayView2<f64>, returns: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        if states.nrows() != returns.len() {
            return Err(Error::shape("value targets", states.nrows(), returns.len()));
        }
        let inputs = self.features.apply(states);
        let targets = returns
            .mapv(|r| (r - self.target_mean) / self.target_std)
            .insert_axis(Axis(1));
        self.net_loss_and_grad(inputs.view(), targets.view())
    }

    fn net_loss_and_grad(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array1<f64>)> {
        let cache = self.net.forward_cached(inputs)?;
        let (loss, grad_out) = heads::squared_error(cache.output().view(), targets)?;
        Ok((loss, self.net.backward(&cache, grad_out.view())?))
    }

    pub fn mse(&self, states: ArrayView2<f64>, returns: ArrayView1<f64>) -> Result<f64> {
        let pred = self.predict_batch(states)?;
        let diff = pred - returns;
        Ok(diff.dot(&diff) / returns.len().max(1) as f64)
    }
}

/// Stacks state vectors row-wise.
pub fn stack_rows(rows: &[Vec<f64>], dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), dim));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&ArrayView1::from(src.as_slice()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_states(n: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::from_seed(seed);
        Array2::from_shape_fn((n, 2), |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn rescaling_preserves_predictions() {
        let mut v = ValueFunction::new(Features::identity(2), &[8], AdamConfig::default(), &mut rng::from_seed(0));
        let s = random_states(10, 1);
        let before = v.predict_batch(s.view()).unwrap();
        v.rescale_output(-37.0, 12.5);
        let after = v.predict_batch(s.view()).unwrap();
        for (a, b) in before.iter().zip(after.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_epochs_leaves_value_unchanged() {
        let mut v = ValueFunction::new(Features::identity(2), &[8], AdamConfig::default(), &mut rng::from_seed(2));
        let before = v.clone();
        let s = random_states(10, 3);
        let cfg = ValueFitConfig { epochs: 0, ..Default::default() };
        v.fit(s.view(), Array1::ones(10).view(), &cfg, &mut rng::from_seed(4)).unwrap();
        assert_eq!(v, before);
    }

    #[test]
    fn fits_zero_returns() {
        let mut v = ValueFunction::new(Features::identity(2), &[32, 32], AdamConfig::default(), &mut rng::from_seed(5));
        let s = random_states(200, 6);
        let cfg = ValueFitConfig { epochs: 100, ..Default::default() };
        v.fit(s.view(), Array1::zeros(200).view(), &cfg, &mut rng::from_seed(7)).unwrap();
        assert!(v.predict_batch(s.view()).unwrap().iter().all(|p| p.abs() < 1e-2));
    }

    #[test]
    fn fits_linear_target() {
        let mut v = ValueFunction::new(Features::identity(2), &[32, 32], AdamConfig::default(), &mut rng::from_seed(8));
        let s = random_states(500, 9);
        let y = s.map_axis(Axis(1), |r| 3.0 * r[0] - 2.0 * r[1] - 10.0);
        let cfg = ValueFitConfig { epochs: 1000, ..Default::default() };
        let mse = v.fit(s.view(), y.view(), &cfg, &mut rng::from_seed(10)).unwrap();
        assert!(mse < 1e-3, "mse {mse}");
    }
}
