//! Sampling-based model predictive control.
//!
//! A plan call simulates candidate action sequences through a transition
//! model, scores each with the discounted task reward plus an optional
//! terminal value, and returns the first action of the mean of the best few
//! sequences.

mod cem;
mod model;
mod select;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use cem::{cem_optimize, refit, CemConfig, CemOutcome, CemState, CEM_STD_FLOOR};
pub use model::{TransitionModel, TrueDynamics};
pub use select::{rank, select_greedy, select_soft_greedy};

use crate::agent::{Behavior, GaussianPolicy, ValueFunction};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Score given to simulated trajectories that left the finite range.
pub const DIVERGED_SCORE: f64 = -1e9;

/// Proposal distribution for candidate action sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SamplingStrategy {
    /// I.i.d. uniform draws from the action box.
    Uniform,
    /// `a ~ pi(.|s)` at every simulated state, with the policy noise
    /// multiplied by `noise_scale`.
    Policy { noise_scale: f64 },
    Cem(CemConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalRewardMode {
    Zero,
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub num_trajectories: usize,
    pub horizon: usize,
    pub elites: usize,
    pub gamma: f64,
    pub sampling: SamplingStrategy,
    pub terminal: TerminalRewardMode,
    /// Evaluate the terminal value at the state after the last action rather
    /// than at the state the last action was taken in.
    pub terminal_after_last_action: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            num_trajectories: 200,
            horizon: 10,
            elites: 10,
            gamma: 0.99,
            sampling: SamplingStrategy::Policy { noise_scale: 1.0 },
            terminal: TerminalRewardMode::Value,
            terminal_after_last_action: false,
        }
    }
}

impl PlannerConfig {
    /// Number of candidates the selection step sees.
    pub fn candidates(&self) -> usize {
        match self.sampling {
            SamplingStrategy::Cem(c) => c.population,
            _ => self.num_trajectories,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("planning horizon must be at least 1".into()));
        }
        if self.candidates() == 0 {
            return Err(Error::Config("planner needs at least one trajectory".into()));
        }
        if self.elites == 0 || self.elites > self.candidates() {
            return Err(Error::Config(format!(
                "elite count {} must lie in [1, {}]",
                self.elites,
                self.candidates()
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("planner discount must lie in (0, 1], got {}", self.gamma)));
        }
        match self.sampling {
            SamplingStrategy::Cem(c) => c.validate()?,
            SamplingStrategy::Policy { noise_scale } if !(noise_scale >= 0.0) => {
                return Err(Error::Config("policy noise scale must be non-negative".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Terminal reward used when scoring.
#[derive(Clone, Copy)]
pub enum Terminal<'a> {
    Zero,
    Value(&'a ValueFunction),
}

/// Immutable snapshots a plan call works from.
#[derive(Clone, Copy)]
pub struct PlanContext<'a> {
    pub env: &'a dyn Environment,
    pub model: &'a dyn TransitionModel,
    pub policy: Option<&'a GaussianPolicy>,
    pub value: Option<&'a ValueFunction>,
}

impl<'a> PlanContext<'a> {
    fn terminal(&self, mode: TerminalRewardMode) -> Result<Terminal<'a>> {
        match mode {
            TerminalRewardMode::Zero => Ok(Terminal::Zero),
            TerminalRewardMode::Value => self
                .value
                .map(Terminal::Value)
                .ok_or_else(|| Error::Config("value terminal requested without a value function".into())),
        }
    }
}

/// Simulated trajectories: `states[n, 0]` is the real state, `states[n, h + 1]`
/// the prediction after `actions[n, h]`. Actions are stored clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollouts {
    pub states: Array3<f64>,
    pub actions: Array3<f64>,
    pub scores: Vec<f64>,
}

impl Rollouts {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// `sum_h gamma^h r_h + gamma^H terminal`, accumulated left to right.
pub fn discounted_score(rewards: &[f64], terminal: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total + discount * terminal
}

/// Score of one simulated trajectory with `H` actions and `H + 1` states.
pub fn evaluate_trajectory(
    env: &dyn Environment,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    terminal: Terminal<'_>,
    gamma: f64,
    terminal_after_last_action: bool,
) -> Result<f64> {
    let horizon = actions.nrows();
    if horizon == 0 || states.nrows() != horizon + 1 {
        return Err(Error::shape("simulated trajectory", format!("{} states", horizon + 1), states.nrows()));
    }
    let rewards: Vec<f64> = (0..horizon)
        .map(|h| env.reward(&states.row(h).to_vec(), &env.spec().clip_action(&actions.row(h).to_vec())))
        .collect();
    let end = if terminal_after_last_action { horizon } else { horizon - 1 };
    let tv = match terminal {
        Terminal::Zero => 0.0,
        Terminal::Value(v) => v.predict(&states.row(end).to_vec())?,
    };
    let score = discounted_score(&rewards, tv, gamma);
    Ok(if score.is_finite() { score } else { DIVERGED_SCORE })
}

fn clip_rows(env: &dyn Environment, actions: &mut Array2<f64>) {
    let spec = env.spec();
    for mut row in actions.rows_mut() {
        for ((v, lo), hi) in row.iter_mut().zip(&spec.action_low).zip(&spec.action_high) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Runs `n` trajectories in lockstep from `state`. `propose(h, states)`
/// returns the step-`h` actions for every trajectory. A trajectory whose
/// prediction stops being finite is frozen and scored [`DIVERGED_SCORE`].
fn simulate(
    ctx: &PlanContext<'_>,
    config: &PlannerConfig,
    state: &[f64],
    n: usize,
    mut propose: impl FnMut(usize, ArrayView2<f64>) -> Result<Array2<f64>>,
) -> Result<Rollouts> {
    let spec = ctx.env.spec();
    let (ds, da, horizon) = (spec.state_dim, spec.action_dim, config.horizon);
    if state.len() != ds {
        return Err(Error::shape("planner state", ds, state.len()));
    }
    let mut states = Array3::zeros((n, horizon + 1, ds));
    let mut actions = Array3::zeros((n, horizon, da));
    let mut rewards = Array2::zeros((n, horizon));
    let mut valid = vec![true; n];
    let mut current = Array2::from_shape_fn((n, ds), |(_, j)| state[j]);
    states.slice_mut(s![.., 0, ..]).assign(&current);
    for h in 0..horizon {
        let mut a = propose(h, current.view())?;
        if a.dim() != (n, da) {
            return Err(Error::shape("proposed actions", format!("({n}, {da})"), format!("{:?}", a.dim())));
        }
        clip_rows(ctx.env, &mut a);
        let next = ctx.model.predict_batch(current.view(), a.view())?;
        for i in 0..n {
            if !valid[i] {
                continue;
            }
            let r = ctx.env.reward(&current.row(i).to_vec(), &a.row(i).to_vec());
            rewards[[i, h]] = r;
            if !r.is_finite() || !next.row(i).iter().all(|v| v.is_finite()) {
                valid[i] = false;
                continue;
            }
            current.row_mut(i).assign(&next.row(i));
        }
        actions.slice_mut(s![.., h, ..]).assign(&a);
        states.slice_mut(s![.., h + 1, ..]).assign(&current);
    }

    let end = if config.terminal_after_last_action { horizon } else { horizon - 1 };
    let terminal_values = match ctx.terminal(config.terminal)? {
        Terminal::Zero => Array1::zeros(n),
        Terminal::Value(v) => v.predict_batch(states.slice(s![.., end, ..]))?,
    };
    let scores = (0..n)
        .map(|i| {
            if !valid[i] {
                return DIVERGED_SCORE;
            }
            let g = discounted_score(rewards.row(i).as_slice().expect("contiguous"), terminal_values[i], config.gamma);
            if g.is_finite() {
                g
            } else {
                DIVERGED_SCORE
            }
        })
        .collect();
    Ok(Rollouts {
        states,
        actions,
        scores,
    })
}

/// Uniform action sequences, drawn trajectory by trajectory, step by step,
/// dimension by dimension.
pub fn uniform_sequences(env: &dyn Environment, n: usize, horizon: usize, rng: &mut impl rand::Rng) -> Array3<f64> {
    let spec = env.spec();
    let mut flat = Vec::with_capacity(n * horizon * spec.action_dim);
    for _ in 0..n {
        for _ in 0..horizon {
            for (lo, hi) in spec.action_low.iter().zip(&spec.action_high) {
                flat.push(rng.random_range(*lo..*hi));
            }
        }
    }
    Array3::from_shape_vec((n, horizon, spec.action_dim), flat).expect("sized above")
}

/// Rolls fixed open-loop action sequences through the model and scores them.
pub fn simulate_sequences(
    ctx: &PlanContext<'_>,
    config: &PlannerConfig,
    state: &[f64],
    sequences: &Array3<f64>,
) -> Result<Rollouts> {
    let n = sequences.len_of(Axis(0));
    simulate(ctx, config, state, n, |h, _| Ok(sequences.slice(s![.., h, ..]).to_owned()))
}

/// Candidate trajectories under the configured proposal. For CEM this is
/// the final scored population.
pub fn sample_trajectories(
    ctx: &PlanContext<'_>,
    config: &PlannerConfig,
    state: &[f64],
    rng: &mut impl rand::Rng,
) -> Result<Rollouts> {
    config.validate()?;
    match config.sampling {
        SamplingStrategy::Uniform => {
            let seqs = uniform_sequences(ctx.env, config.num_trajectories, config.horizon, rng);
            simulate_sequences(ctx, config, state, &seqs)
        }
        SamplingStrategy::Policy { noise_scale } => {
            let policy = ctx
                .policy
                .ok_or_else(|| Error::Config("policy sampling requested without a policy".into()))?;
            let std = policy.log_std().mapv(|l| l.exp() * noise_scale);
            simulate(ctx, config, state, config.num_trajectories, |_, states| {
                let mut a = policy.mean_batch(states)?;
                for mut row in a.rows_mut() {
                    for (v, s) in row.iter_mut().zip(std.iter()) {
                        let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                        *v += s * z;
                    }
                }
                Ok(a)
            })
        }
        SamplingStrategy::Cem(cem) => cem_refine(ctx, config, &cem, state, rng),
    }
}

/// CEM over flat action sequences scored by simulated rollouts; returns the
/// last population.
pub fn cem_refine(
    ctx: &PlanContext<'_>,
    config: &PlannerConfig,
    cem: &CemConfig,
    state: &[f64],
    rng: &mut impl rand::Rng,
) -> Result<Rollouts> {
    let spec = ctx.env.spec();
    let (horizon, da) = (config.horizon, spec.action_dim);
    let tile = |f: &dyn Fn(f64, f64) -> f64| -> Array1<f64> {
        (0..horizon * da)
            .map(|k| f(spec.action_low[k % da], spec.action_high[k % da]))
            .collect()
    };
    let init = CemState {
        mean: tile(&|l, h| 0.5 * (l + h)),
        std: tile(&|l, h| 0.5 * (h - l) * cem.init_std_fraction),
    };
    let low = tile(&|l, _| l);
    let high = tile(&|_, h| h);
    let mut last: Option<Rollouts> = None;
    cem_optimize(
        |pop| {
            let seqs = pop
                .to_owned()
                .into_shape_with_order((pop.nrows(), horizon, da))
                .map_err(|e| Error::Numerical(e.to_string()))?;
            let r = simulate_sequences(ctx, config, state, &seqs)?;
            let scores = r.scores.clone();
            last = Some(r);
            Ok(scores)
        },
        init,
        &low,
        &high,
        cem,
        rng,
    )?;
    Ok(last.expect("CEM ran at least once"))
}

/// Sample, score, select; returns the first action of the selected sequence,
/// clipped to the action box.
pub fn plan(
    ctx: &PlanContext<'_>,
    config: &PlannerConfig,
    state: &[f64],
    rng: &mut impl rand::Rng,
) -> Result<Vec<f64>> {
    let rollouts = sample_trajectories(ctx, config, state, rng)?;
    let best = select_soft_greedy(rollouts.actions.view(), &rollouts.scores, config.elites)?;
    Ok(ctx.env.spec().clip_action(&best.row(0).to_vec()))
}

/// Acts in the real environment by planning at every step.
pub struct MpcBehavior<'a> {
    pub context: PlanContext<'a>,
    pub config: &'a PlannerConfig,
}

impl Behavior for MpcBehavior<'_> {
    fn act(&mut self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        plan(&self.context, self.config, state, rng)
    }
}
