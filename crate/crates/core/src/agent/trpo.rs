use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::policy::{kl_rows, GaussianPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrpoConfig {
    /// Trust-region radius on the mean KL divergence.
    pub max_kl: f64,
    pub cg_iterations: usize,
    pub cg_damping: f64,
    pub max_backtracks: usize,
    /// Accepted KL is at most this multiple of `max_kl`.
    pub kl_slack: f64,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            max_kl: 0.01,
            cg_iterations: 10,
            cg_damping: 0.1,
            max_backtracks: 10,
            kl_slack: 1.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrpoReport {
    pub accepted: bool,
    /// Mean KL from the old to the new policy (0 when rejected).
    pub kl: f64,
    /// Surrogate at the new parameters minus the surrogate at the old ones.
    pub improvement: f64,
    pub backtracks: usize,
    pub gradient_norm: f64,
}

/// Samples the update is computed from. `actions` are the raw sampled actions
/// and `old_log_prob` their log-density under the behaviour policy.
pub struct TrpoBatch<'a> {
    pub states: ArrayView2<'a, f64>,
    pub actions: ArrayView2<'a, f64>,
    pub advantages: ArrayView1<'a, f64>,
    pub old_log_prob: ArrayView1<'a, f64>,
}

/// `mean(exp(log pi(a|s) - old_log_prob) * A)`.
pub fn surrogate(policy: &GaussianPolicy, batch: &TrpoBatch<'_>) -> Result<f64> {
    let lp = policy.log_prob_batch(batch.states, batch.actions)?;
    let n = lp.len().max(1) as f64;
    Ok(lp
        .iter()
        .zip(batch.old_log_prob)
        .zip(batch.advantages)
        .map(|((l, o), a)| (l - o).exp() * a)
        .sum::<f64>()
        / n)
}

/// Gradient of [`surrogate`] with respect to the policy parameters.
pub fn surrogate_grad(policy: &GaussianPolicy, batch: &TrpoBatch<'_>) -> Result<Array1<f64>> {
    let lp = policy.log_prob_batch(batch.states, batch.actions)?;
    let n = lp.len().max(1) as f64;
    let weights: Array1<f64> = lp
        .iter()
        .zip(batch.old_log_prob)
        .zip(batch.advantages)
        .map(|((l, o), a)| (l - o).exp() * a / n)
        .collect();
    policy.log_prob_grad(batch.states, batch.actions, weights.view())
}

/// Products with the Fisher matrix of the policy at fixed states, i.e. the
/// Hessian of the mean KL at the current parameters.
pub struct FisherOperator<'a> {
    policy: &'a GaussianPolicy,
    cache: crate::nn::ForwardCache,
    inv_var: Array1<f64>,
    damping: f64,
}

impl<'a> FisherOperator<'a> {
    pub fn new(policy: &'a GaussianPolicy, states: ArrayView2<f64>, damping: f64) -> Result<Self> {
        let inputs = policy.features().apply(states);
        let cache = policy.mean_net().forward_cached(inputs.view())?;
        let inv_var = policy.log_std().mapv(|l| (-2.0 * l).exp());
        Ok(Self {
            policy,
            cache,
            inv_var,
            damping,
        })
    }

    pub fn apply(&self, v: &Array1<f64>) -> Result<Array1<f64>> {
        let net = self.policy.mean_net();
        let split = net.num_params();
        let jv: Array2<f64> = net.jvp(&self.cache, &v.as_slice().expect("contiguous")[..split])?;
        let n = jv.nrows().max(1) as f64;
        let mut weighted = jv;
        for mut row in weighted.rows_mut() {
            row *= &self.inv_var;
        }
        weighted /= n;
        let mut out = net.backward(&self.cache, weighted.view())?.to_vec();
        // d^2 KL / d log_std^2 = 2 per dimension
        out.extend(v.iter().skip(split).map(|x| 2.0 * x));
        let mut out = Array1::from(out);
        out.scaled_add(self.damping, v);
        Ok(out)
    }
}

/// Approximately solves `F x = b` with `iterations` conjugate-gradient steps
/// starting from zero.
pub fn conjugate_gradient(
    apply: impl Fn(&Array1<f64>) -> Result<Array1<f64>>,
    b: &Array1<f64>,
    iterations: usize,
) -> Result<Array1<f64>> {
    let mut x = Array1::zeros(b.len());
    let mut r = b.clone();
    let mut p = b.clone();
    let mut rr = r.dot(&r);
    for _ in 0..iterations {
        if rr < 1e-20 {
            break;
        }
        let fp = apply(&p)?;
        let alpha = rr / p.dot(&fp);
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &fp);
        let next = r.dot(&r);
        p = &r + &(p * (next / rr));
        rr = next;
    }
    Ok(x)
}

/// One trust-region step on the importance-weighted surrogate.
///
/// The natural-gradient direction from conjugate gradient is scaled to the
/// KL radius and then halved until the mean KL is within `kl_slack * max_kl`
/// and the surrogate has not decreased. If no candidate qualifies, or any
/// quantity is non-finite, the policy is left untouched.
pub fn trpo_update(
    policy: &mut GaussianPolicy,
    batch: &TrpoBatch<'_>,
    config: &TrpoConfig,
) -> Result<TrpoReport> {
    if batch.states.nrows() == 0 {
        return Err(Error::State("empty policy batch".into()));
    }
    let mut report = TrpoReport::default();
    let old = policy.clone();
    let base = surrogate(&old, batch)?;
    let g = surrogate_grad(&old, batch)?;
    report.gradient_norm = g.dot(&g).sqrt();
    if !base.is_finite() || !report.gradient_norm.is_finite() || report.gradient_norm == 0.0 {
        return Ok(report);
    }
    let fisher = FisherOperator::new(&old, batch.states, config.cg_damping)?;
    let dir = conjugate_gradient(|v| fisher.apply(v), &g, config.cg_iterations)?;
    let shs = dir.dot(&fisher.apply(&dir)?);
    if !(shs.is_finite() && shs > 0.0) {
        return Ok(report);
    }
    let full_step = dir * (2.0 * config.max_kl / shs).sqrt();
    let theta = old.params();
    let old_mean = old.mean_batch(batch.states)?;

    let mut fraction = 1.0;
    for k in 0..=config.max_backtracks {
        let candidate = &theta + &(&full_step * fraction);
        fraction *= 0.5;
        let mut trial = old.clone();
        trial.set_params(candidate.as_slice().expect("contiguous"))?;
        let new_mean = trial.mean_batch(batch.states)?;
        let kl = kl_rows(old_mean.view(), old.log_std(), new_mean.view(), trial.log_std())
            .mean()
            .unwrap_or(0.0);
        let improvement = surrogate(&trial, batch)? - base;
        if kl.is_finite()
            && improvement.is_finite()
            && kl <= config.kl_slack * config.max_kl
            && improvement >= 0.0
        {
            *policy = trial;
            report.accepted = true;
            report.kl = kl;
            report.improvement = improvement;
            report.backtracks = k;
            return Ok(report);
        }
    }
    report.backtracks = config.max_backtracks;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::advantage::normalize;
    use crate::agent::features::Features;
    use crate::rng;
    use ndarray::array;
    use rand::Rng as _;

    fn policy(seed: u64) -> GaussianPolicy {
        GaussianPolicy::new(Features::identity(2), 2, &[8], &[0.1, -0.4], &mut rng::from_seed(seed))
    }

    fn batch_data(p: &GaussianPolicy, n: usize, seed: u64) -> (Array2<f64>, Array2<f64>, Array1<f64>, Array1<f64>) {
        let mut r = rng::from_seed(seed);
        let s = Array2::from_shape_fn((n, 2), |_| r.random_range(-1.0..1.0));
        let a = p.sample_batch(s.view(), &mut r).unwrap();
        let adv: Array1<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let lp = p.log_prob_batch(s.view(), a.view()).unwrap();
        (s, a, adv, lp)
    }

    #[test]
    fn surrogate_gradient_is_policy_gradient_at_old_parameters() {
        let p = policy(0);
        let (s, a, adv, lp) = batch_data(&p, 30, 1);
        let b = TrpoBatch { states: s.view(), actions: a.view(), advantages: adv.view(), old_log_prob: lp.view() };
        let g = surrogate_grad(&p, &b).unwrap();
        let vanilla = p.log_prob_grad(s.view(), a.view(), (&adv / 30.0).view()).unwrap();
        for (x, y) in g.iter().zip(vanilla.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn fisher_matches_kl_hessian() {
        let p = policy(2);
        let s = array![[0.1, 0.2], [-0.5, 0.9], [0.7, -0.3]];
        let f = FisherOperator::new(&p, s.view(), 0.0).unwrap();
        let mut r = rng::from_seed(3);
        let v: Array1<f64> = (0..p.num_params()).map(|_| r.random_range(-1.0..1.0)).collect();
        let fv = f.apply(&v).unwrap();
        // second directional derivative of KL(old || old + t v) at t = 0
        let kl_at = |t: f64| {
            let mut q = p.clone();
            q.set_params((&p.params() + &(&v * t)).as_slice().unwrap()).unwrap();
            p.mean_kl(&q, s.view()).unwrap()
        };
        let h = 1e-4;
        let second = (kl_at(h) - 2.0 * kl_at(0.0) + kl_at(-h)) / (h * h);
        assert!((v.dot(&fv) - second).abs() < 1e-4 * second.abs().max(1.0), "{} vs {second}", v.dot(&fv));
    }

    #[test]
    fn conjugate_gradient_solves_spd_system() {
        let m = array![[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = array![1.0, -2.0, 0.5];
        let x = conjugate_gradient(|v| Ok(m.dot(v)), &b, 10).unwrap();
        let r = m.dot(&x) - &b;
        assert!(r.dot(&r).sqrt() < 1e-10);
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let mut p = policy(4);
        let (s, a, _, lp) = batch_data(&p, 20, 5);
        let adv = Array1::zeros(20);
        let before = p.clone();
        let b = TrpoBatch { states: s.view(), actions: a.view(), advantages: adv.view(), old_log_prob: lp.view() };
        let rep = trpo_update(&mut p, &b, &TrpoConfig::default()).unwrap();
        assert!(!rep.accepted);
        assert_eq!(p, before);
    }

    #[test]
    fn accepted_steps_respect_trust_region() {
        let mut p = policy(6);
        let cfg = TrpoConfig::default();
        for i in 0..20 {
            let (s, a, adv, lp) = batch_data(&p, 64, 100 + i);
            let b = TrpoBatch { states: s.view(), actions: a.view(), advantages: adv.view(), old_log_prob: lp.view() };
            let rep = trpo_update(&mut p, &b, &cfg).unwrap();
            if rep.accepted {
                assert!(rep.kl <= 1.5 * cfg.max_kl);
                assert!(rep.improvement >= 0.0);
            }
        }
    }

    #[test]
    fn scaled_advantages_give_same_step() {
        let base = policy(7);
        let (s, a, adv, lp) = batch_data(&base, 40, 8);
        let n1 = Array1::from(normalize(adv.as_slice().unwrap()));
        let n2 = Array1::from(normalize((&adv * 37.0).as_slice().unwrap()));
        let run = |adv: &Array1<f64>| {
            let mut p = base.clone();
            let b = TrpoBatch { states: s.view(), actions: a.view(), advantages: adv.view(), old_log_prob: lp.view() };
            trpo_update(&mut p, &b, &TrpoConfig::default()).unwrap();
            p.params()
        };
        for (x, y) in run(&n1).iter().zip(run(&n2).iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn solves_gaussian_bandit() {
        // Single state, reward -(a - 2)^2, one-step episodes.
        let mut p = GaussianPolicy::new(Features::identity(1), 1, &[8], &[0.0], &mut rng::from_seed(9));
        let mut r = rng::from_seed(10);
        let s = Array2::zeros((64, 1));
        for _ in 0..100 {
            let a = p.sample_batch(s.view(), &mut r).unwrap();
            let rewards: Vec<f64> = a.column(0).iter().map(|x| -(x - 2.0).powi(2)).collect();
            let adv = Array1::from(normalize(&rewards));
            let lp = p.log_prob_batch(s.view(), a.view()).unwrap();
            let b = TrpoBatch { states: s.view(), actions: a.view(), advantages: adv.view(), old_log_prob: lp.view() };
            trpo_update(&mut p, &b, &TrpoConfig::default()).unwrap();
        }
        let mu = p.mean_action(&[0.0]).unwrap()[0];
        assert!((mu - 2.0).abs() < 0.2, "mean {mu}");
    }
}
