use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::Features;
use crate::error::{Error, Result};
use crate::nn::{heads, Mlp};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian policy with a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    features: Features,
    mean: Mlp,
    log_std: Array1<f64>,
}

impl GaussianPolicy {
    /// Mean network with its output layer shrunk by 0.01 so initial means sit
    /// near zero.
    pub fn new(
        features: Features,
        action_dim: usize,
        hidden: &[usize],
        init_log_std: &[f64],
        rng: &mut impl rand::Rng,
    ) -> Self {
        assert_eq!(init_log_std.len(), action_dim);
        let mean = Mlp::new(features.dim(), hidden, action_dim, 1.0, 0.01, rng);
        Self::from_parts(features, mean, Array1::from(init_log_std.to_vec()))
    }

    pub fn from_parts(features: Features, mean: Mlp, log_std: Array1<f64>) -> Self {
        assert_eq!(mean.input_dim(), features.dim());
        assert_eq!(mean.output_dim(), log_std.len());
        let mut p = Self {
            features,
            mean,
            log_std,
        };
        p.clamp_log_std();
        p
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn mean_net(&self) -> &Mlp {
        &self.mean
    }

    pub fn log_std(&self) -> ArrayView1<'_, f64> {
        self.log_std.view()
    }

    pub fn set_log_std(&mut self, log_std: &[f64]) {
        assert_eq!(log_std.len(), self.log_std.len());
        self.log_std = Array1::from(log_std.to_vec());
        self.clamp_log_std();
    }

    fn clamp_log_std(&mut self) {
        self.log_std.mapv_inplace(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn state_dim(&self) -> usize {
        self.features.state_dim()
    }

    fn check_states(&self, states: &ArrayView2<f64>) -> Result<()> {
        if states.ncols() != self.state_dim() {
            return Err(Error::shape("policy state", self.state_dim(), states.ncols()));
        }
        Ok(())
    }

    /// `mu(s)` for every row.
    pub fn mean_batch(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_states(&states)?;
        self.mean.forward(self.features.apply(states).view())
    }

    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim() {
            return Err(Error::shape("policy state", self.state_dim(), state.len()));
        }
        Ok(self
            .mean
            .forward(self.features.apply_one(state).view())?
            .into_raw_vec_and_offset()
            .0)
    }

    /// `mu(s) + exp(log_std) * z`, `z ~ N(0, I)`; not clipped.
    pub fn sample_action(&self, state: &[f64], rng: &mut impl rand::Rng) -> Result<Vec<f64>> {
        let mut a = self.mean_action(state)?;
        for (v, l) in a.iter_mut().zip(self.log_std.iter()) {
            let z: f64 = StandardNormal.sample(rng);
            *v += l.exp() * z;
        }
        Ok(a)
    }

    /// One sample per row.
    pub fn sample_batch(&self, states: ArrayView2<f64>, rng: &mut impl rand::Rng) -> Result<Array2<f64>> {
        let mut a = self.mean_batch(states)?;
        let std = self.log_std.mapv(f64::exp);
        for mut row in a.rows_mut() {
            for (v, s) in row.iter_mut().zip(std.iter()) {
                let z: f64 = StandardNormal.sample(rng);
                *v += s * z;
            }
        }
        Ok(a)
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let s = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|_| Error::shape("policy state", self.state_dim(), state.len()))?;
        let a = ArrayView2::from_shape((1, action.len()), action)
            .map_err(|_| Error::shape("policy action", self.action_dim(), action.len()))?;
        Ok(self.log_prob_batch(s, a)?[0])
    }

    pub fn log_prob_batch(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
        if actions.ncols() != self.action_dim() || actions.nrows() != states.nrows() {
            return Err(Error::shape(
                "policy action",
                format!("({}, {})", states.nrows(), self.action_dim()),
                format!("{:?}", actions.dim()),
            ));
        }
        let mean = self.mean_batch(states)?;
        Ok(heads::gaussian_log_prob(mean.view(), self.log_std.view(), actions))
    }

    pub fn num_params(&self) -> usize {
        self.mean.num_params() + self.log_std.len()
    }

    /// Mean-network parameters followed by the log-std entries.
    pub fn params(&self) -> Array1<f64> {
        let mut p = self.mean.params().to_vec();
        p.extend(self.log_std.iter().copied());
        Array1::from(p)
    }

    /// Inverse of [`GaussianPolicy::params`]; the log-std part is clamped.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("policy parameters", self.num_params(), flat.len()));
        }
        let split = self.mean.num_params();
        self.mean.set_params(&flat[..split])?;
        self.set_log_std(&flat[split..]);
        Ok(())
    }

    /// Gradient of `sum_i weights_i * log pi(a_i | s_i)` in [`GaussianPolicy::params`] order.
    pub fn log_prob_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        weights: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        self.check_states(&states)?;
        let cache = self.mean.forward_cached(self.features.apply(states).view())?;
        let mean = cache.output();
        if mean.dim() != actions.dim() || weights.len() != actions.nrows() {
            return Err(Error::shape(
                "policy gradient batch",
                format!("{:?}", mean.dim()),
                format!("{:?} with {} weights", actions.dim(), weights.len()),
            ));
        }
        let inv_var = self.log_std.mapv(|l| (-2.0 * l).exp());
        let z = &actions - mean;
        let mut grad_mean = z.clone();
        let mut grad_log_std: Array1<f64> = Array1::zeros(self.action_dim());
        for ((mut g, zr), w) in grad_mean.rows_mut().into_iter().zip(z.rows()).zip(weights) {
            for d in 0..g.len() {
                g[d] = w * zr[d] * inv_var[d];
                grad_log_std[d] += w * (zr[d] * zr[d] * inv_var[d] - 1.0);
            }
        }
        let mut out = self.mean.backward(&cache, grad_mean.view())?.to_vec();
        out.extend(grad_log_std.iter().copied());
        Ok(Array1::from(out))
    }

    /// Mean over rows of `KL(self(.|s) || other(.|s))`.
    pub fn mean_kl(&self, other: &GaussianPolicy, states: ArrayView2<f64>) -> Result<f64> {
        let m0 = self.mean_batch(states)?;
        let m1 = other.mean_batch(states)?;
        Ok(kl_rows(m0.view(), self.log_std.view(), m1.view(), other.log_std.view()).mean().unwrap_or(0.0))
    }
}

/// Per-row `KL(N(m0, s0^2) || N(m1, s1^2))` for diagonal Gaussians.
pub fn kl_rows(
    m0: ArrayView2<f64>,
    l0: ArrayView1<f64>,
    m1: ArrayView2<f64>,
    l1: ArrayView1<f64>,
) -> Array1<f64> {
    let mut out = Array1::zeros(m0.nrows());
    for (i, (r0, r1)) in m0.rows().into_iter().zip(m1.rows()).enumerate() {
        let mut kl = 0.0;
        for d in 0..r0.len() {
            let v0 = (2.0 * l0[d]).exp();
            let v1 = (2.0 * l1[d]).exp();
            let dm = r0[d] - r1[d];
            kl += l1[d] - l0[d] + (v0 + dm * dm) / (2.0 * v1) - 0.5;
        }
        out[i] = kl;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;
    use std::f64::consts::PI;

    fn policy(seed: u64) -> GaussianPolicy {
        GaussianPolicy::new(Features::new(2, &[0]), 2, &[8, 8], &[-0.3, 0.2], &mut rng::from_seed(seed))
    }

    #[test]
    fn zero_mean_net_gives_zero_action() {
        let p = GaussianPolicy::from_parts(Features::identity(3), Mlp::zeros(3, &[4], 2), array![0.0, 0.0]);
        assert_eq!(p.mean_action(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn log_std_is_clamped() {
        let mut p = policy(0);
        p.set_log_std(&[-40.0, 9.0]);
        assert_eq!(p.log_std().to_vec(), vec![LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn minimal_std_is_nearly_deterministic() {
        let mut p = policy(1);
        p.set_log_std(&[-1e9, -1e9]);
        let s = [0.4, -0.2];
        let mu = p.mean_action(&s).unwrap();
        let a = p.sample_action(&s, &mut rng::from_seed(3)).unwrap();
        for (x, m) in a.iter().zip(&mu) {
            // 5 standard deviations at std e^-5
            assert!((x - m).abs() < 5.0 * (-5.0f64).exp());
        }
    }

    #[test]
    fn seeded_samples_repeat() {
        let p = policy(2);
        let a = p.sample_action(&[0.1, 0.2], &mut rng::from_seed(9)).unwrap();
        let b = p.sample_action(&[0.1, 0.2], &mut rng::from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_converges_to_policy_mean() {
        let p = policy(3);
        let s = [1.0, -0.5];
        let mu = p.mean_action(&s).unwrap();
        let mut r = rng::from_seed(4);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let a = p.sample_action(&s, &mut r).unwrap();
            sum[0] += a[0];
            sum[1] += a[1];
        }
        for d in 0..2 {
            let sigma = p.log_std()[d].exp();
            assert!((sum[d] / n as f64 - mu[d]).abs() < 4.0 * sigma / (n as f64).sqrt());
        }
    }

    #[test]
    fn mean_ignores_log_std() {
        let mut p = policy(5);
        let before = p.mean_action(&[0.3, 0.3]).unwrap();
        p.set_log_std(&[1.5, -3.0]);
        assert_eq!(p.mean_action(&[0.3, 0.3]).unwrap(), before);
    }

    #[test]
    fn density_at_mean_with_unit_std() {
        let mut p = policy(6);
        p.set_log_std(&[0.0, 0.0]);
        let s = [0.2, 0.9];
        let mu = p.mean_action(&s).unwrap();
        let lp = p.log_prob(&s, &mu).unwrap();
        assert!((lp - (-(2.0 * PI).ln())).abs() < 1e-14);
    }

    #[test]
    fn log_prob_matches_product_of_densities() {
        let p = policy(7);
        let mut r = rng::from_seed(8);
        use rand::Rng as _;
        for _ in 0..50 {
            let s = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
            let a = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
            let mu = p.mean_action(&s).unwrap();
            let mut density = 1.0;
            for d in 0..2 {
                let sd = p.log_std()[d].exp();
                let z = (a[d] - mu[d]) / sd;
                density *= (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt());
            }
            assert!((p.log_prob(&s, &a).unwrap() - density.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let p = policy(9);
        let states = array![[0.3, -1.0], [2.0, 0.5], [-1.2, 0.1]];
        let actions = array![[0.5, -0.2], [-1.0, 0.8], [0.0, 0.3]];
        let w = array![1.0, -0.5, 2.0];
        let g = p.log_prob_grad(states.view(), actions.view(), w.view()).unwrap();
        let theta = p.params();
        let f = |q: &Array1<f64>| {
            let mut pp = p.clone();
            pp.set_params(q.as_slice().unwrap()).unwrap();
            pp.log_prob_batch(states.view(), actions.view()).unwrap().dot(&w)
        };
        for i in 0..theta.len() {
            let h = 1e-6;
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn kl_of_identical_policies_is_zero() {
        let p = policy(10);
        let states = array![[0.3, -1.0], [2.0, 0.5]];
        assert_eq!(p.mean_kl(&p, states.view()).unwrap(), 0.0);
    }

    #[test]
    fn sampled_actions_have_finite_log_prob() {
        let p = policy(11);
        let mut r = rng::from_seed(12);
        let a = p.sample_action(&[0.0, 0.0], &mut r).unwrap();
        assert!(p.log_prob(&[0.0, 0.0], &a).unwrap().is_finite());
    }
}
