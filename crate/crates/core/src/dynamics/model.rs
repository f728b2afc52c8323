use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Batch, TransitionDataset};
use super::normalizer::{Normalizer, Stats};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::nn::{heads, Adam, AdamConfig, Mlp};

/// What the network regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictionMode {
    /// `f(s, a) = s + delta(s, a)`.
    Delta,
    /// `f(s, a)` directly.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub mode: PredictionMode,
    /// When false the normalizer stays at the identity.
    pub normalize: bool,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub held_out_fraction: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            mode: PredictionMode::Delta,
            normalize: true,
            adam: AdamConfig::default(),
            epochs: 30,
            batch_size: 128,
            held_out_fraction: 0.1,
        }
    }
}

/// Deterministic learned forward model operating in raw state units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    net: Mlp,
    normalizer: Normalizer,
    config: ModelConfig,
    optimizer: Adam,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

/// Loss history of one [`DynamicsModel::train`] call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean minibatch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Held-out loss after each epoch; empty when the split is empty.
    pub held_out_loss: Vec<f64>,
    pub steps: usize,
}

impl DynamicsModel {
    pub fn new(spec: &EnvSpec, config: ModelConfig, rng: &mut impl rand::Rng) -> Self {
        let net = Mlp::new(
            spec.state_dim + spec.action_dim,
            &config.hidden,
            spec.state_dim,
            1.0,
            1.0,
            rng,
        );
        Self::with_net(spec, config, net)
    }

    /// Model whose network outputs zero everywhere.
    pub fn zeros(spec: &EnvSpec, config: ModelConfig) -> Self {
        let net = Mlp::zeros(spec.state_dim + spec.action_dim, &config.hidden, spec.state_dim);
        Self::with_net(spec, config, net)
    }

    pub fn with_net(spec: &EnvSpec, config: ModelConfig, net: Mlp) -> Self {
        assert_eq!(net.input_dim(), spec.state_dim + spec.action_dim);
        assert_eq!(net.output_dim(), spec.state_dim);
        let optimizer = Adam::new(config.adam, net.num_params());
        Self {
            normalizer: Normalizer::identity(spec.state_dim, spec.action_dim),
            net,
            config,
            optimizer,
            action_low: spec.action_low.clone(),
            action_high: spec.action_high.clone(),
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    /// Replaces the normalizer without compensating the network.
    pub fn set_normalizer(&mut self, normalizer: Normalizer) {
        self.normalizer = normalizer;
    }

    fn clip_actions(&self, actions: ArrayView2<f64>) -> Array2<f64> {
        let mut out = actions.to_owned();
        for mut row in out.rows_mut() {
            for ((v, lo), hi) in row.iter_mut().zip(&self.action_low).zip(&self.action_high) {
                *v = v.clamp(*lo, *hi);
            }
        }
        out
    }

    fn net_input(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
        let s = self.normalizer.state.normalize(states);
        let a = self.normalizer.action.normalize(actions);
        concatenate![Axis(1), s, a]
    }

    fn compose(&self, states: ArrayView2<f64>, net_out: ArrayView2<f64>) -> Array2<f64> {
        let out = self.normalizer.output.denormalize(net_out);
        match self.config.mode {
            PredictionMode::Delta => out + states,
            PredictionMode::Absolute => out,
        }
    }

    fn check_batch(&self, states: &ArrayView2<f64>, actions: &ArrayView2<f64>) -> Result<()> {
        if states.ncols() != self.state_dim() {
            return Err(Error::shape("model state", self.state_dim(), states.ncols()));
        }
        if actions.ncols() != self.action_dim() || actions.nrows() != states.nrows() {
            return Err(Error::shape(
                "model action",
                format!("({}, {})", states.nrows(), self.action_dim()),
                format!("{:?}", actions.dim()),
            ));
        }
        Ok(())
    }

    /// Row-wise next-state predictions. Actions are clipped to the box first.
    pub fn predict_batch(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&states, &actions)?;
        let actions = self.clip_actions(actions);
        let out = self.net.forward(self.net_input(states, actions.view()).view())?;
        Ok(self.compose(states, out.view()))
    }

    pub fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let s = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|_| Error::shape("model state", self.state_dim(), state.len()))?;
        let a = ArrayView2::from_shape((1, action.len()), action)
            .map_err(|_| Error::shape("model action", self.action_dim(), action.len()))?;
        Ok(self.predict_batch(s, a)?.into_raw_vec_and_offset().0)
    }

    /// Mean over the batch of `|s' - f(s, a)|^2`, in raw units.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::State("empty batch".into()));
        }
        let pred = self.predict_batch(batch.states.view(), batch.actions.view())?;
        Ok(heads::squared_error(pred.view(), batch.next_states.view())?.0)
    }

    /// Loss and its gradient with respect to the network parameters.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Array1<f64>)> {
        if batch.is_empty() {
            return Err(Error::State("empty batch".into()));
        }
        self.check_batch(&batch.states.view(), &batch.actions.view())?;
        let actions = self.clip_actions(batch.actions.view());
        let cache = self
            .net
            .forward_cached(self.net_input(batch.states.view(), actions.view()).view())?;
        let pred = self.compose(batch.states.view(), cache.output().view());
        let (loss, mut grad_pred) = heads::squared_error(pred.view(), batch.next_states.view())?;
        grad_pred *= &self.normalizer.output.std;
        let grad = self.net.backward(&cache, grad_pred.view())?;
        Ok((loss, grad))
    }

    /// Refits the normalizer to `dataset` and rewrites the first and last
    /// layers so the model computes exactly the same function as before.
    pub fn refit_normalizer(&mut self, dataset: &TransitionDataset) {
        if !self.config.normalize || dataset.is_empty() {
            return;
        }
        let all = dataset.as_batch();
        let target = match self.config.mode {
            PredictionMode::Delta => &all.next_states - &all.states,
            PredictionMode::Absolute => all.next_states.clone(),
        };
        let new = Normalizer {
            state: Stats::fit(all.states.view()),
            action: Stats::fit(all.actions.view()),
            output: Stats::fit(target.view()),
        };
        let old = std::mem::replace(&mut self.normalizer, new);
        let new = &self.normalizer;

        let old_mean = concatenate![Axis(0), old.state.mean, old.action.mean];
        let old_std = concatenate![Axis(0), old.state.std, old.action.std];
        let new_mean = concatenate![Axis(0), new.state.mean, new.action.mean];
        let new_std = concatenate![Axis(0), new.state.std, new.action.std];
        let layers = self.net.layers_mut();
        {
            // x_old = (x_new * s1 + m1 - m0) / s0
            let first = &mut layers[0];
            let shift = (&new_mean - &old_mean) / &old_std;
            first.bias = &first.bias + &shift.dot(&first.weights);
            let ratio = &new_std / &old_std;
            for (mut row, r) in first.weights.rows_mut().into_iter().zip(ratio.iter()) {
                row *= *r;
            }
        }
        {
            // y_new = (y_old * so0 + mo0 - mo1) / so1
            let last = layers.last_mut().expect("at least one layer");
            let ratio = &old.output.std / &new.output.std;
            last.weights *= &ratio;
            last.bias = (&last.bias * &old.output.std + &old.output.mean - &new.output.mean)
                / &new.output.std;
        }
    }

    /// Refits the normalizer, then runs `epochs * ceil(n_train / batch)` Adam
    /// steps on minibatches drawn with replacement from the training split.
    /// The held-out split is the last fraction of a shuffled index list.
    ///
    /// On a numerical failure the parameters and optimizer state are rolled
    /// back to the start of the failing epoch and the error is returned.
    pub fn train(
        &mut self,
        dataset: &TransitionDataset,
        epochs: usize,
        batch_size: usize,
        rng: &mut impl rand::Rng,
    ) -> Result<TrainingReport> {
        let mut report = TrainingReport::default();
        if epochs == 0 {
            return Ok(report);
        }
        if dataset.is_empty() {
            return Err(Error::State("cannot train on an empty dataset".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("model batch size must be positive".into()));
        }
        self.refit_normalizer(dataset);

        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(rng);
        let held = ((dataset.len() as f64) * self.config.held_out_fraction).floor() as usize;
        let held = held.min(dataset.len() - 1);
        let (train_idx, held_idx) = order.split_at(dataset.len() - held);
        let held_batch = (!held_idx.is_empty()).then(|| dataset.batch_of(held_idx));
        let steps_per_epoch = train_idx.len().div_ceil(batch_size);

        for epoch in 0..epochs {
            let snapshot = (self.net.clone(), self.optimizer.clone());
            let mut total = 0.0;
            let mut outcome = Ok(());
            for _ in 0..steps_per_epoch {
                let picks: Vec<usize> = (0..batch_size)
                    .map(|_| train_idx[rng.random_range(0..train_idx.len())])
                    .collect();
                let batch = dataset.batch_of(&picks);
                let (loss, grad) = match self.loss_and_grad(&batch) {
                    Ok(v) => v,
                    Err(e) => {
                        outcome = Err(e);
                        break;
                    }
                };
                if !loss.is_finite() {
                    outcome = Err(Error::Numerical(format!(
                        "dynamics loss became {loss} in epoch {epoch}"
                    )));
                    break;
                }
                let mut params = self.net.params();
                if let Err(e) = self
                    .optimizer
                    .step(params.as_slice_mut().expect("contiguous"), grad.as_slice().expect("contiguous"))
                {
                    outcome = Err(e);
                    break;
                }
                self.net.set_params(params.as_slice().expect("contiguous"))?;
                total += loss;
                report.steps += 1;
            }
            if let Err(e) = outcome {
                self.net = snapshot.0;
                self.optimizer = snapshot.1;
                return Err(e);
            }
            report.train_loss.push(total / steps_per_epoch as f64);
            if let Some(b) = &held_batch {
                report.held_out_loss.push(self.loss(b)?);
            }
        }
        Ok(report)
    }

    /// Mean squared single-step error over a fixed test set.
    pub fn held_out_error(&self, test_set: &TransitionDataset) -> Result<f64> {
        if test_set.is_empty() {
            return Err(Error::State("empty test set".into()));
        }
        self.loss(&test_set.as_batch())
    }
}

/// Squared-error rows for diagnostics: `|s' - f(s, a)|^2` per transition.
pub fn per_transition_error(model: &DynamicsModel, batch: &Batch) -> Result<Array1<f64>> {
    let pred = model.predict_batch(batch.states.view(), batch.actions.view())?;
    let diff = pred - &batch.next_states;
    Ok(diff.map_axis(Axis(1), |r| r.dot(&r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use crate::envs::{Environment, Lqr, Transition};
    use crate::rng;
    use ndarray::array;

    fn spec2() -> EnvSpec {
        EnvSpec::new("t", 2, vec![-1.0], vec![1.0], 10)
    }

    fn lqr_dataset(n: usize, seed: u64) -> TransitionDataset {
        let env = Lqr::new();
        let spec = env.spec().clone();
        let mut r = rng::from_seed(seed);
        let mut d = TransitionDataset::new(spec.state_dim, spec.action_dim);
        for _ in 0..n {
            let s: Vec<f64> = (0..2).map(|_| r.random_range(-1.5..1.5)).collect();
            let a = vec![r.random_range(spec.action_low[0]..spec.action_high[0])];
            let (ns, rew) = env.step(&s, &a).unwrap();
            d.push(Transition { state: s, action: a, next_state: ns, reward: rew }).unwrap();
        }
        d
    }

    #[test]
    fn zero_net_delta_predicts_identity() {
        let m = DynamicsModel::zeros(&spec2(), ModelConfig::default());
        assert_eq!(m.predict(&[0.3, -2.0], &[0.5]).unwrap(), vec![0.3, -2.0]);
    }

    #[test]
    fn prediction_composes_normalization() {
        let mut m = DynamicsModel::new(&spec2(), ModelConfig::default(), &mut rng::from_seed(1));
        m.set_normalizer(Normalizer {
            state: Stats { mean: array![0.5, -1.0], std: array![2.0, 0.5] },
            action: Stats { mean: array![0.1], std: array![0.3] },
            output: Stats { mean: array![0.01, 0.02], std: array![0.1, 0.2] },
        });
        let (s, a) = ([1.0, 2.0], [0.4]);
        let x = [(1.0 - 0.5) / 2.0, (2.0 + 1.0) / 0.5, (0.4 - 0.1) / 0.3];
        let y = m.net().forward_one(&x).unwrap();
        let expect = [1.0 + y[0] * 0.1 + 0.01, 2.0 + y[1] * 0.2 + 0.02];
        let got = m.predict(&s, &a).unwrap();
        for (g, e) in got.iter().zip(expect) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn actions_are_clipped_before_prediction() {
        let m = DynamicsModel::new(&spec2(), ModelConfig::default(), &mut rng::from_seed(2));
        assert_eq!(m.predict(&[0.1, 0.2], &[7.0]).unwrap(), m.predict(&[0.1, 0.2], &[1.0]).unwrap());
    }

    #[test]
    fn loss_of_single_offset_is_squared_norm() {
        let m = DynamicsModel::zeros(&spec2(), ModelConfig::default());
        let mut d = TransitionDataset::new(2, 1);
        d.push(Transition { state: vec![1.0, 1.0], action: vec![0.0], next_state: vec![4.0, -3.0], reward: 0.0 })
            .unwrap();
        // prediction is s, so v = (3, -4)
        assert_eq!(m.loss(&d.as_batch()).unwrap(), 25.0);
    }

    #[test]
    fn loss_is_mean_of_squared_norms() {
        let m = DynamicsModel::zeros(&spec2(), ModelConfig::default());
        let mut d = TransitionDataset::new(2, 1);
        for (s, ns) in [([0.0, 0.0], [1.0, 2.0]), ([1.0, -1.0], [1.0, -1.0]), ([2.0, 0.5], [0.0, 0.0])] {
            d.push(Transition { state: s.to_vec(), action: vec![0.2], next_state: ns.to_vec(), reward: 0.0 })
                .unwrap();
        }
        // 5, 0 and 4.25
        assert_eq!(m.loss(&d.as_batch()).unwrap(), (5.0 + 0.0 + 4.25) / 3.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = lqr_dataset(20, 3);
        let mut m = DynamicsModel::new(&Lqr::new().spec().clone(), ModelConfig { hidden: vec![8], ..Default::default() }, &mut rng::from_seed(4));
        m.refit_normalizer(&d);
        let b = d.as_batch();
        let (_, g) = m.loss_and_grad(&b).unwrap();
        let p = m.net().params();
        for i in (0..p.len()).step_by(3) {
            let h = 1e-6;
            let mut plus = m.clone();
            let mut q = p.clone();
            q[i] += h;
            plus.net.set_params(q.as_slice().unwrap()).unwrap();
            let mut minus = m.clone();
            q[i] -= 2.0 * h;
            minus.net.set_params(q.as_slice().unwrap()).unwrap();
            let fd = (plus.loss(&b).unwrap() - minus.loss(&b).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn refit_preserves_function() {
        let d = lqr_dataset(50, 5);
        let spec = Lqr::new().spec().clone();
        let mut m = DynamicsModel::new(&spec, ModelConfig::default(), &mut rng::from_seed(6));
        let b = d.as_batch();
        let before = m.predict_batch(b.states.view(), b.actions.view()).unwrap();
        m.refit_normalizer(&d);
        assert_ne!(m.normalizer(), &Normalizer::identity(2, 1));
        let after = m.predict_batch(b.states.view(), b.actions.view()).unwrap();
        for (x, y) in before.iter().zip(after.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let d = lqr_dataset(10, 7);
        let spec = Lqr::new().spec().clone();
        let mut m = DynamicsModel::new(&spec, ModelConfig::default(), &mut rng::from_seed(8));
        let before = m.clone();
        let report = m.train(&d, 0, 32, &mut rng::from_seed(9)).unwrap();
        assert!(report.train_loss.is_empty() && report.held_out_loss.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn empty_inputs_are_state_errors() {
        let spec = Lqr::new().spec().clone();
        let mut m = DynamicsModel::new(&spec, ModelConfig::default(), &mut rng::from_seed(8));
        let empty = TransitionDataset::new(2, 1);
        assert!(matches!(m.train(&empty, 1, 8, &mut rng::from_seed(0)), Err(Error::State(_))));
        assert!(matches!(m.held_out_error(&empty), Err(Error::State(_))));
    }

    #[test]
    fn learns_linear_dynamics() {
        let d = lqr_dataset(2000, 10);
        let test = lqr_dataset(200, 11);
        let spec = Lqr::new().spec().clone();
        let mut m = DynamicsModel::new(&spec, ModelConfig::default(), &mut rng::from_seed(12));
        let first = m.held_out_error(&test).unwrap();
        let report = m.train(&d, 50, 128, &mut rng::from_seed(13)).unwrap();
        assert_eq!(report.train_loss.len(), 50);
        assert_eq!(report.steps, 50 * 1800usize.div_ceil(128));
        assert!(report.train_loss[49] <= report.train_loss[0]);
        assert!(report.held_out_loss[49] < 1e-4, "held-out {}", report.held_out_loss[49]);
        assert!(report.held_out_loss[9] > report.held_out_loss[49]);
        let err = m.held_out_error(&test).unwrap();
        assert!(err < first && err < 1e-4);
        assert_eq!(err, m.loss(&test.as_batch()).unwrap());
        let env = Lqr::new();
        for t in test.transitions().iter().take(20) {
            let truth = env.step(&t.state, &t.action).unwrap().0;
            let pred = m.predict(&t.state, &t.action).unwrap();
            let e: f64 = truth.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(e < 1e-2);
        }
    }

    #[test]
    fn unnormalized_training_also_fits() {
        let d = lqr_dataset(2000, 14);
        let spec = Lqr::new().spec().clone();
        let cfg = ModelConfig { normalize: false, ..Default::default() };
        let mut m = DynamicsModel::new(&spec, cfg, &mut rng::from_seed(15));
        let report = m.train(&d, 50, 128, &mut rng::from_seed(16)).unwrap();
        assert_eq!(m.normalizer(), &Normalizer::identity(2, 1));
        assert!(report.held_out_loss.last().unwrap() < &1e-2);
    }

    #[test]
    fn training_is_reproducible() {
        let d = lqr_dataset(300, 17);
        let spec = Lqr::new().spec().clone();
        let run = || {
            let mut m = DynamicsModel::new(&spec, ModelConfig::default(), &mut rng::from_seed(18));
            let r = m.train(&d, 3, 64, &mut rng::from_seed(19)).unwrap();
            (m, r)
        };
        assert_eq!(run(), run());
    }
}
