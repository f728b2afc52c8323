//! Per-seed training state.
//!
//! Experiments are decomposed into trainers: an agent trainer (policy and
//! value function) and model trainers (a dynamics model plus its dataset).
//! Several experiment configs may share a trainer. Each trainer draws only
//! from random streams keyed by its own identity, so its trajectory does not
//! depend on which other trainers run next to it.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agent::{collect_rollouts, run_episode, Agent, AgentConfig, Episode, Stochastic, UniformRandom};
use crate::dynamics::{DynamicsModel, ModelConfig, TrainingReport, TransitionDataset};
use crate::envs::{EnvName, Environment};
use crate::error::{Error, Result};
use crate::planner::{MpcBehavior, PlanContext, PlannerConfig};
use crate::rng::{self, tag};

use super::config::{Collector, ExperimentConfig};
use super::curve::EvalRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub env: EnvName,
    pub config: AgentConfig,
    pub updates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    /// Episodes collected by the named agent trainer.
    Policy { agent: String },
    /// Uniform exploration for the first `random_steps`, then episodes of
    /// MPC on the current model.
    RandomMpc { random_steps: usize, planner: PlannerConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub env: EnvName,
    pub config: ModelConfig,
    pub train_period: usize,
    pub source: DataSource,
    /// False when only the collected data is of interest.
    pub train: bool,
}

fn identity<T: Serialize>(spec: &T) -> (String, u64) {
    let key = serde_json::to_string(spec).expect("specs serialize");
    let tag = rng::hash_str(&key);
    (format!("{tag:016x}"), tag)
}

/// Trainers an experiment config relies on, by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub config: ExperimentConfig,
    pub agent: Option<String>,
    pub model: Option<String>,
}

/// The deduplicated trainers behind a set of experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub env: EnvName,
    pub total_steps: usize,
    pub steps_per_iteration: usize,
    pub members: Vec<Member>,
    pub agents: BTreeMap<String, AgentSpec>,
    pub models: BTreeMap<String, ModelSpec>,
}

impl TrainingPlan {
    pub fn new(configs: &[ExperimentConfig]) -> Result<Self> {
        let first = configs
            .first()
            .ok_or_else(|| Error::Config("no experiment configs given".into()))?;
        for c in configs {
            c.validate()?;
            let shared = c.env == first.env
                && c.total_steps == first.total_steps
                && c.eval_period == first.eval_period
                && c.eval_episodes == first.eval_episodes
                && c.seeds == first.seeds
                && c.test_set_size == first.test_set_size
                && c.steps_per_iteration() == first.steps_per_iteration();
            if !shared {
                return Err(Error::Config(format!(
                    "`{}` and `{}` differ in budget, schedule or seeds and cannot run together",
                    first.label, c.label
                )));
            }
        }
        let mut slugs: Vec<String> = configs.iter().map(|c| c.slug()).collect();
        slugs.sort_unstable();
        if slugs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("experiment labels must be distinct, `{}` repeats", slugs[0])));
        }
        let mut plan = Self {
            env: first.env,
            total_steps: first.total_steps,
            steps_per_iteration: first.steps_per_iteration(),
            members: Vec::new(),
            agents: BTreeMap::new(),
            models: BTreeMap::new(),
        };
        for c in configs {
            let agent = needs_agent(c).then(|| plan.add_agent(c));
            let model = c.method.plans().then(|| plan.add_model(c, c.collector, true));
            plan.members.push(Member {
                config: c.clone(),
                agent,
                model,
            });
        }
        Ok(plan)
    }

    /// Trainers that generate the held-out set: one policy-collected and one
    /// random-mpc-collected dataset, with the settings of `base`.
    pub fn for_test_set(base: &ExperimentConfig) -> Result<(Self, String, String)> {
        base.validate()?;
        let mut plan = Self {
            env: base.env,
            total_steps: base.total_steps,
            steps_per_iteration: base.steps_per_iteration(),
            members: Vec::new(),
            agents: BTreeMap::new(),
            models: BTreeMap::new(),
        };
        let policy = plan.add_model(base, Collector::Policy, false);
        let random = plan.add_model(base, Collector::RandomMpc, true);
        Ok((plan, policy, random))
    }

    fn add_agent(&mut self, c: &ExperimentConfig) -> String {
        let spec = AgentSpec {
            env: c.env,
            config: c.agent.clone(),
            updates: c.mfrl_updates,
        };
        let (id, _) = identity(&spec);
        self.agents.insert(id.clone(), spec);
        id
    }

    fn add_model(&mut self, c: &ExperimentConfig, collector: Collector, train: bool) -> String {
        let source = match collector {
            Collector::Policy => DataSource::Policy { agent: self.add_agent(c) },
            Collector::RandomMpc => DataSource::RandomMpc {
                random_steps: random_steps(c),
                planner: c.aggregation_planner.clone(),
            },
        };
        let spec = ModelSpec {
            env: c.env,
            config: c.model.clone(),
            train_period: c.model_train_period,
            source,
            train,
        };
        let (id, _) = identity(&spec);
        self.models.insert(id.clone(), spec);
        id
    }
}

fn needs_agent(c: &ExperimentConfig) -> bool {
    use crate::planner::{SamplingStrategy, TerminalRewardMode};
    c.method.uses_agent()
        || (c.method.plans()
            && (matches!(c.planner.sampling, SamplingStrategy::Policy { .. })
                || c.planner.terminal == TerminalRewardMode::Value))
}

/// Uniform-exploration share of the budget, in whole episodes.
fn random_steps(c: &ExperimentConfig) -> usize {
    let t = c.horizon();
    ((c.random_fraction * c.total_steps as f64 / t as f64).round() as usize) * t
}

/// Diagnostics of one agent update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentLogRow {
    pub iteration: usize,
    pub steps: usize,
    pub accepted: bool,
    pub kl: f64,
    pub improvement: f64,
    pub backtracks: usize,
    pub value_loss: Option<f64>,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrainer {
    pub id: String,
    pub spec: AgentSpec,
    pub agent: Agent,
    pub env_steps: usize,
    pub log: Vec<AgentLogRow>,
}

impl AgentTrainer {
    fn new(id: &str, spec: &AgentSpec, seed: u64) -> Self {
        let env = spec.env.build();
        let mut r = rng::stream(seed, &[tag::INIT, rng::hash_str(id)]);
        Self {
            id: id.to_string(),
            agent: Agent::new(env.spec(), &spec.config, &mut r),
            spec: spec.clone(),
            env_steps: 0,
            log: Vec::new(),
        }
    }

    /// Collects `n_steps` with the stochastic policy, then updates the policy
    /// and value function on them.
    fn iterate(&mut self, env: &dyn Environment, seed: u64, iteration: usize, n_steps: usize) -> Result<Vec<Episode>> {
        let t = rng::hash_str(&self.id);
        let it = iteration as u64;
        let mut r = rng::stream(seed, &[tag::ROLLOUT, t, it]);
        let episodes = collect_rollouts(env, &mut Stochastic(&self.agent.policy), n_steps, &mut r)?;
        self.env_steps += episodes.iter().map(Episode::len).sum::<usize>();
        let mean_return =
            episodes.iter().map(|e| e.trajectory.total_reward()).sum::<f64>() / episodes.len() as f64;
        let mut row = AgentLogRow {
            iteration,
            steps: self.env_steps,
            accepted: false,
            kl: 0.0,
            improvement: 0.0,
            backtracks: 0,
            value_loss: None,
            mean_return,
        };
        if self.spec.updates {
            let mut r = rng::stream(seed, &[tag::VALUE_FIT, t, it]);
            let report = self.agent.update(&episodes, &self.spec.config, &mut r)?;
            row.accepted = report.trpo.accepted;
            row.kl = report.trpo.kl;
            row.improvement = report.trpo.improvement;
            row.backtracks = report.trpo.backtracks;
            row.value_loss = Some(report.value_loss);
        }
        self.log.push(row);
        Ok(episodes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTrainer {
    pub id: String,
    pub spec: ModelSpec,
    pub model: DynamicsModel,
    /// Persisted separately; `dataset_len` records how much of it belongs to
    /// this state.
    #[serde(skip)]
    pub dataset: Option<TransitionDataset>,
    pub dataset_len: usize,
    /// Environment steps this trainer collected itself.
    pub env_steps: usize,
    /// Dataset size at the last fit; 0 before the first.
    pub trained_on: usize,
    pub fits: usize,
    pub last_report: Option<TrainingReport>,
}

impl ModelTrainer {
    fn new(id: &str, spec: &ModelSpec, seed: u64) -> Self {
        let env = spec.env.build();
        let mut r = rng::stream(seed, &[tag::INIT, rng::hash_str(id)]);
        Self {
            id: id.to_string(),
            model: DynamicsModel::new(env.spec(), spec.config.clone(), &mut r),
            spec: spec.clone(),
            dataset: Some(TransitionDataset::new(env.spec().state_dim, env.spec().action_dim)),
            dataset_len: 0,
            env_steps: 0,
            trained_on: 0,
            fits: 0,
            last_report: None,
        }
    }

    pub fn dataset(&self) -> &TransitionDataset {
        self.dataset.as_ref().expect("dataset loaded")
    }

    fn append(&mut self, episodes: &[Episode]) -> Result<()> {
        let data = self.dataset.as_mut().expect("dataset loaded");
        for e in episodes {
            data.extend_from_trajectory(&e.trajectory)?;
        }
        self.dataset_len = data.len();
        Ok(())
    }

    /// Random-then-MPC collection of `n_steps` starting at budget position
    /// `start`.
    fn collect(&mut self, env: &dyn Environment, seed: u64, iteration: usize, start: usize, n_steps: usize) -> Result<()> {
        let DataSource::RandomMpc { random_steps, planner } = self.spec.source.clone() else {
            return Err(Error::State("only random-mpc trainers collect their own data".into()));
        };
        let t = rng::hash_str(&self.id);
        let horizon = env.spec().horizon;
        let mut episodes = Vec::new();
        for k in 0..n_steps / horizon {
            let mut r = rng::stream(seed, &[tag::AGGREGATE, t, iteration as u64, k as u64]);
            let reset: u64 = r.random();
            let episode = if start + k * horizon < random_steps {
                run_episode(env, &mut UniformRandom::for_env(env), reset, &mut r)?
            } else {
                if !episodes.is_empty() {
                    self.append(&std::mem::take(&mut episodes))?;
                }
                if self.trained_on < random_steps.min(self.dataset_len) {
                    self.fit(seed, iteration, 1)?;
                }
                let mut behavior = MpcBehavior {
                    context: PlanContext {
                        env,
                        model: &self.model,
                        policy: None,
                        value: None,
                    },
                    config: &planner,
                };
                run_episode(env, &mut behavior, reset, &mut r)?
            };
            self.env_steps += episode.len();
            episodes.push(episode);
        }
        self.append(&episodes)
    }

    fn fit(&mut self, seed: u64, iteration: usize, sub: u64) -> Result<()> {
        if !self.spec.train || self.dataset_len == self.trained_on {
            return Ok(());
        }
        let mut r = rng::stream(seed, &[tag::MODEL_TRAIN, rng::hash_str(&self.id), iteration as u64, sub]);
        let (epochs, batch) = (self.spec.config.epochs, self.spec.config.batch_size);
        let data = self.dataset.as_ref().expect("dataset loaded");
        let report = self.model.train(data, epochs, batch, &mut r)?;
        self.trained_on = self.dataset_len;
        self.fits += 1;
        self.last_report = Some(report);
        Ok(())
    }
}

/// Everything one seed of a training plan has accumulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedState {
    pub seed: u64,
    /// Budget steps consumed so far.
    pub steps: usize,
    pub iteration: usize,
    pub agents: BTreeMap<String, AgentTrainer>,
    pub models: BTreeMap<String, ModelTrainer>,
    pub evals: Vec<EvalRecord>,
    pub held_out: Vec<HeldOutRecord>,
}

/// Dynamics test error of one config's model at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutRecord {
    pub label: String,
    pub collector: Collector,
    pub seed: u64,
    pub steps: usize,
    pub error: f64,
}

impl SeedState {
    pub fn new(plan: &TrainingPlan, seed: u64) -> Self {
        Self {
            seed,
            steps: 0,
            iteration: 0,
            agents: plan.agents.iter().map(|(id, s)| (id.clone(), AgentTrainer::new(id, s, seed))).collect(),
            models: plan.models.iter().map(|(id, s)| (id.clone(), ModelTrainer::new(id, s, seed))).collect(),
            evals: Vec::new(),
            held_out: Vec::new(),
        }
    }

    /// One outer iteration of `n_steps`: every agent collects and updates,
    /// then every model appends its data and refits when due. `checkpoint`
    /// forces a refit so evaluations see all data.
    pub fn advance(&mut self, env: &dyn Environment, n_steps: usize, checkpoint: bool) -> Result<()> {
        let (seed, it, start) = (self.seed, self.iteration, self.steps);
        let mut fresh = BTreeMap::new();
        for (id, a) in &mut self.agents {
            fresh.insert(id.clone(), a.iterate(env, seed, it, n_steps)?);
        }
        let end = start + n_steps;
        for m in self.models.values_mut() {
            match &m.spec.source {
                DataSource::Policy { agent } => {
                    let eps = fresh
                        .get(agent)
                        .ok_or_else(|| Error::State(format!("agent trainer {agent} is missing")))?;
                    m.append(eps)?;
                }
                DataSource::RandomMpc { .. } => m.collect(env, seed, it, start, n_steps)?,
            }
            let p = m.spec.train_period;
            if checkpoint || p == 0 || start / p != end / p {
                m.fit(seed, it, 0)?;
            }
        }
        self.steps = end;
        self.iteration += 1;
        Ok(())
    }

    /// Trains up to `target` budget steps in iterations of at most
    /// `per_iteration`, refitting models on arrival.
    pub fn advance_to(&mut self, env: &dyn Environment, per_iteration: usize, target: usize) -> Result<()> {
        while self.steps < target {
            let n = per_iteration.min(target - self.steps);
            self.advance(env, n, self.steps + n == target)?;
        }
        Ok(())
    }
}
