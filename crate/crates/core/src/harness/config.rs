use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::dynamics::{ModelConfig, PredictionMode};
use crate::envs::EnvName;
use crate::error::{Error, Result};
use crate::planner::{CemConfig, PlannerConfig, SamplingStrategy, TerminalRewardMode};

/// Environment variable naming the directory relative output paths live under.
pub const OUTPUT_ROOT_VAR: &str = "MPC_MFRL_OUT";

/// How a method acts at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Planner guided by the learned policy and value function.
    MpcMfrl,
    /// Stochastic policy actions.
    MfS,
    /// Policy mean actions.
    MfD,
    /// Uniform random shooting on a model trained with random exploration
    /// plus MPC data aggregation.
    MpcRandom,
    /// Cross-entropy planning on the same kind of model.
    MpcCem,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::MpcMfrl, Method::MfS, Method::MfD, Method::MpcRandom, Method::MpcCem];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::MpcMfrl => "mpc-mfrl",
            Method::MfS => "mf-s",
            Method::MfD => "mf-d",
            Method::MpcRandom => "mpc-random",
            Method::MpcCem => "mpc-cem",
        }
    }

    pub fn legend(self) -> &'static str {
        match self {
            Method::MpcMfrl => "MPC-MFRL",
            Method::MfS => "MF(S)",
            Method::MfD => "MF(D)",
            Method::MpcRandom => "MPC-Random",
            Method::MpcCem => "MPC-CEM",
        }
    }

    pub fn plans(self) -> bool {
        matches!(self, Method::MpcMfrl | Method::MpcRandom | Method::MpcCem)
    }

    pub fn uses_agent(self) -> bool {
        matches!(self, Method::MpcMfrl | Method::MfS | Method::MfD)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Where the dynamics model's training data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Collector {
    /// Rollouts of the exploratory policy.
    Policy,
    /// Uniform random exploration, then aggregation of uniform-shooting MPC
    /// executions on the current model.
    RandomMpc,
}

impl Collector {
    pub fn as_str(self) -> &'static str {
        match self {
            Collector::Policy => "policy",
            Collector::RandomMpc => "random-mpc",
        }
    }
}

impl FromStr for Collector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "policy" => Ok(Collector::Policy),
            "random-mpc" => Ok(Collector::RandomMpc),
            _ => Err(Error::Config(format!("unknown collector `{s}`"))),
        }
    }
}

/// Everything that defines one experiment. A run covers every seed in
/// `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Display name; ablation variants carry their legend here.
    pub label: String,
    pub env: EnvName,
    pub method: Method,
    pub total_steps: usize,
    pub eval_period: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub planner: PlannerConfig,
    /// Planner used while aggregating data for the random-mpc collector.
    pub aggregation_planner: PlannerConfig,
    pub agent: AgentConfig,
    /// When false the policy and value function never change.
    pub mfrl_updates: bool,
    pub model: ModelConfig,
    /// Steps between model fits; 0 fits after every iteration.
    pub model_train_period: usize,
    pub collector: Collector,
    /// Share of the budget spent on uniform exploration by the random-mpc
    /// collector.
    pub random_fraction: f64,
    /// Transitions per collector in the held-out set; 0 disables scoring.
    pub test_set_size: usize,
    pub bootstrap_resamples: usize,
    pub output_dir: PathBuf,
}

fn default_budget(env: EnvName) -> usize {
    match env {
        EnvName::Lqr => 20_000,
        _ => 100_000,
    }
}

fn preset_planner(method: Method) -> PlannerConfig {
    let base = PlannerConfig::default();
    match method {
        Method::MpcRandom => PlannerConfig {
            sampling: SamplingStrategy::Uniform,
            terminal: TerminalRewardMode::Zero,
            elites: 1,
            ..base
        },
        Method::MpcCem => PlannerConfig {
            sampling: SamplingStrategy::Cem(CemConfig::default()),
            terminal: TerminalRewardMode::Zero,
            elites: 1,
            ..base
        },
        _ => base,
    }
}

impl ExperimentConfig {
    /// Defaults for `method` on `env`.
    pub fn preset(env: EnvName, method: Method) -> Self {
        Self {
            label: method.legend().to_string(),
            env,
            method,
            total_steps: default_budget(env),
            eval_period: 2_000,
            eval_episodes: 10,
            seeds: vec![0, 1, 2, 3, 4],
            planner: preset_planner(method),
            aggregation_planner: preset_planner(Method::MpcRandom),
            agent: AgentConfig::default(),
            mfrl_updates: true,
            model: ModelConfig::default(),
            model_train_period: 0,
            collector: match method {
                Method::MpcRandom | Method::MpcCem => Collector::RandomMpc,
                _ => Collector::Policy,
            },
            random_fraction: 0.2,
            test_set_size: 0,
            bootstrap_resamples: 1_000,
            output_dir: PathBuf::from(format!("{}-{}", env.as_str(), method.as_str())),
        }
    }

    pub fn horizon(&self) -> usize {
        self.env.build().spec().horizon
    }

    pub fn steps_per_iteration(&self) -> usize {
        self.agent.episodes_per_iteration * self.horizon()
    }

    /// File-system friendly form of the label.
    pub fn slug(&self) -> String {
        slug(&self.label)
    }

    /// Whether a dynamics model has to be trained.
    pub fn needs_model(&self) -> bool {
        self.method.plans() || self.test_set_size > 0
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        if self.total_steps == 0 || self.total_steps % t != 0 {
            return Err(Error::Config(format!(
                "total_steps {} must be a positive multiple of the episode length {t}",
                self.total_steps
            )));
        }
        if self.eval_period == 0 || self.eval_period % t != 0 || self.total_steps % self.eval_period != 0 {
            return Err(Error::Config(format!(
                "eval_period {} must be a multiple of the episode length {t} that divides total_steps {}",
                self.eval_period, self.total_steps
            )));
        }
        if self.model_train_period % t != 0 {
            return Err(Error::Config(format!(
                "model_train_period {} must be a multiple of the episode length {t}",
                self.model_train_period
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(0.0..=1.0).contains(&self.random_fraction) {
            return Err(Error::Config(format!("random_fraction must lie in [0, 1], got {}", self.random_fraction)));
        }
        if self.model.epochs > 0 && self.model.batch_size == 0 {
            return Err(Error::Config("model_batch must be positive".into()));
        }
        if self.model.hidden.contains(&0) || self.agent.policy_hidden.contains(&0) || self.agent.value_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::Config("bootstrap_resamples must be positive".into()));
        }
        self.agent.validate()?;
        if self.method.plans() {
            self.planner.validate()?;
        }
        if self.collector == Collector::RandomMpc || self.test_set_size > 0 {
            self.aggregation_planner.validate()?;
        }
        Ok(())
    }

    /// Parses flat `key = value` text. `env` and `method` pick the preset the
    /// remaining keys override; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if pairs.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        let env: EnvName = take(&mut pairs, "env")?
            .ok_or_else(|| Error::Config("missing required key `env`".into()))?;
        let method: Method = take(&mut pairs, "method")?
            .ok_or_else(|| Error::Config("missing required key `method`".into()))?;
        let mut c = Self::preset(env, method);
        c.apply(&mut pairs)?;
        if let Some(k) = pairs.keys().next() {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn apply(&mut self, p: &mut BTreeMap<String, String>) -> Result<()> {
        set(p, "label", &mut self.label)?;
        set(p, "total_steps", &mut self.total_steps)?;
        set(p, "eval_period", &mut self.eval_period)?;
        set(p, "eval_episodes", &mut self.eval_episodes)?;
        if let Some(v) = p.remove("seeds") {
            self.seeds = parse_list(&v, "seeds")?;
        }
        if let Some(v) = p.remove("output_dir") {
            self.output_dir = PathBuf::from(v);
        }

        let a = &mut self.agent;
        set(p, "gamma", &mut a.gamma)?;
        set(p, "gae_lambda", &mut a.lambda)?;
        set(p, "max_kl", &mut a.trpo.max_kl)?;
        set(p, "cg_iterations", &mut a.trpo.cg_iterations)?;
        set(p, "cg_damping", &mut a.trpo.cg_damping)?;
        set(p, "line_search_steps", &mut a.trpo.max_backtracks)?;
        set(p, "value_epochs", &mut a.value_fit.epochs)?;
        set(p, "value_batch", &mut a.value_fit.batch_size)?;
        set(p, "value_lr", &mut a.value_fit.adam.learning_rate)?;
        set(p, "normalize_advantages", &mut a.normalize_advantages)?;
        set(p, "init_std_fraction", &mut a.init_std_fraction)?;
        set(p, "episodes_per_iteration", &mut a.episodes_per_iteration)?;
        set(p, "bootstrap_cutoff", &mut a.bootstrap_cutoff)?;
        if let Some(v) = p.remove("policy_hidden") {
            a.policy_hidden = parse_list(&v, "policy_hidden")?;
        }
        if let Some(v) = p.remove("value_hidden") {
            a.value_hidden = parse_list(&v, "value_hidden")?;
        }
        set(p, "mfrl_updates", &mut self.mfrl_updates)?;

        apply_planner(p, "planner.", &mut self.planner)?;
        apply_planner(p, "aggregation.", &mut self.aggregation_planner)?;

        let m = &mut self.model;
        if let Some(v) = p.remove("model_hidden") {
            m.hidden = parse_list(&v, "model_hidden")?;
        }
        if let Some(v) = p.remove("model_mode") {
            m.mode = match v.as_str() {
                "delta" => PredictionMode::Delta,
                "absolute" => PredictionMode::Absolute,
                _ => return Err(Error::Config(format!("unknown model_mode `{v}`"))),
            };
        }
        set(p, "model_normalize", &mut m.normalize)?;
        set(p, "model_epochs", &mut m.epochs)?;
        set(p, "model_batch", &mut m.batch_size)?;
        set(p, "model_lr", &mut m.adam.learning_rate)?;
        set(p, "model_held_out_fraction", &mut m.held_out_fraction)?;
        set(p, "model_train_period", &mut self.model_train_period)?;
        set(p, "collector", &mut self.collector)?;
        set(p, "random_fraction", &mut self.random_fraction)?;
        set(p, "test_set_size", &mut self.test_set_size)?;
        set(p, "bootstrap_resamples", &mut self.bootstrap_resamples)?;
        Ok(())
    }

    /// Text form accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut lines = vec![
            format!("label = {}", self.label),
            format!("env = {}", self.env),
            format!("method = {}", self.method),
            format!("total_steps = {}", self.total_steps),
            format!("eval_period = {}", self.eval_period),
            format!("eval_episodes = {}", self.eval_episodes),
            format!("seeds = {}", self.seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")),
            format!("output_dir = {}", self.output_dir.display()),
            format!("gamma = {}", self.agent.gamma),
            format!("gae_lambda = {}", self.agent.lambda),
            format!("max_kl = {}", self.agent.trpo.max_kl),
            format!("cg_iterations = {}", self.agent.trpo.cg_iterations),
            format!("cg_damping = {}", self.agent.trpo.cg_damping),
            format!("line_search_steps = {}", self.agent.trpo.max_backtracks),
            format!("value_epochs = {}", self.agent.value_fit.epochs),
            format!("value_batch = {}", self.agent.value_fit.batch_size),
            format!("value_lr = {}", self.agent.value_fit.adam.learning_rate),
            format!("normalize_advantages = {}", self.agent.normalize_advantages),
            format!("init_std_fraction = {}", self.agent.init_std_fraction),
            format!("episodes_per_iteration = {}", self.agent.episodes_per_iteration),
            format!("bootstrap_cutoff = {}", self.agent.bootstrap_cutoff),
            format!("policy_hidden = {}", list(&self.agent.policy_hidden)),
            format!("value_hidden = {}", list(&self.agent.value_hidden)),
            format!("mfrl_updates = {}", self.mfrl_updates),
        ];
        lines.extend(planner_lines("planner.", &self.planner));
        lines.extend(planner_lines("aggregation.", &self.aggregation_planner));
        lines.extend([
            format!("model_hidden = {}", list(&self.model.hidden)),
            format!(
                "model_mode = {}",
                match self.model.mode {
                    PredictionMode::Delta => "delta",
                    PredictionMode::Absolute => "absolute",
                }
            ),
            format!("model_normalize = {}", self.model.normalize),
            format!("model_epochs = {}", self.model.epochs),
            format!("model_batch = {}", self.model.batch_size),
            format!("model_lr = {}", self.model.adam.learning_rate),
            format!("model_held_out_fraction = {}", self.model.held_out_fraction),
            format!("model_train_period = {}", self.model_train_period),
            format!("collector = {}", self.collector.as_str()),
            format!("random_fraction = {}", self.random_fraction),
            format!("test_set_size = {}", self.test_set_size),
            format!("bootstrap_resamples = {}", self.bootstrap_resamples),
        ]);
        lines.join("\n") + "\n"
    }
}

fn planner_lines(prefix: &str, c: &PlannerConfig) -> Vec<String> {
    let (sampling, cem, noise) = match c.sampling {
        SamplingStrategy::Uniform => ("uniform", CemConfig::default(), 1.0),
        SamplingStrategy::Policy { noise_scale } => ("policy", CemConfig::default(), noise_scale),
        SamplingStrategy::Cem(cem) => ("cem", cem, 1.0),
    };
    vec![
        format!("{prefix}sampling = {sampling}"),
        format!("{prefix}policy_noise = {noise}"),
        format!("{prefix}trajectories = {}", c.num_trajectories),
        format!("{prefix}horizon = {}", c.horizon),
        format!("{prefix}elites = {}", c.elites),
        format!("{prefix}gamma = {}", c.gamma),
        format!(
            "{prefix}terminal = {}",
            match c.terminal {
                TerminalRewardMode::Zero => "zero",
                TerminalRewardMode::Value => "value",
            }
        ),
        format!("{prefix}terminal_after_last_action = {}", c.terminal_after_last_action),
        format!("{prefix}cem_population = {}", cem.population),
        format!("{prefix}cem_elite_fraction = {}", cem.elite_fraction),
        format!("{prefix}cem_iterations = {}", cem.iterations),
        format!("{prefix}cem_init_std = {}", cem.init_std_fraction),
        format!("{prefix}cem_smoothing = {}", cem.smoothing),
    ]
}

fn apply_planner(p: &mut BTreeMap<String, String>, prefix: &str, c: &mut PlannerConfig) -> Result<()> {
    let key = |k: &str| format!("{prefix}{k}");
    let mut cem = match c.sampling {
        SamplingStrategy::Cem(cem) => cem,
        _ => CemConfig::default(),
    };
    let mut noise = match c.sampling {
        SamplingStrategy::Policy { noise_scale } => noise_scale,
        _ => 1.0,
    };
    set(p, &key("trajectories"), &mut c.num_trajectories)?;
    set(p, &key("horizon"), &mut c.horizon)?;
    set(p, &key("elites"), &mut c.elites)?;
    set(p, &key("gamma"), &mut c.gamma)?;
    set(p, &key("terminal_after_last_action"), &mut c.terminal_after_last_action)?;
    if let Some(v) = p.remove(&key("terminal")) {
        c.terminal = match v.as_str() {
            "zero" => TerminalRewardMode::Zero,
            "value" => TerminalRewardMode::Value,
            _ => return Err(Error::Config(format!("unknown {} `{v}`", key("terminal")))),
        };
    }
    set(p, &key("policy_noise"), &mut noise)?;
    set(p, &key("cem_population"), &mut cem.population)?;
    set(p, &key("cem_elite_fraction"), &mut cem.elite_fraction)?;
    set(p, &key("cem_iterations"), &mut cem.iterations)?;
    set(p, &key("cem_init_std"), &mut cem.init_std_fraction)?;
    set(p, &key("cem_smoothing"), &mut cem.smoothing)?;
    let name = p.remove(&key("sampling")).unwrap_or_else(|| {
        match c.sampling {
            SamplingStrategy::Uniform => "uniform",
            SamplingStrategy::Policy { .. } => "policy",
            SamplingStrategy::Cem(_) => "cem",
        }
        .to_string()
    });
    c.sampling = match name.as_str() {
        "uniform" => SamplingStrategy::Uniform,
        "policy" => SamplingStrategy::Policy { noise_scale: noise },
        "cem" => SamplingStrategy::Cem(cem),
        _ => return Err(Error::Config(format!("unknown {} `{name}`", key("sampling")))),
    };
    Ok(())
}

fn take<T: FromStr>(p: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    p.remove(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| Error::Config(format!("invalid value `{v}` for `{key}`: {e}")))
        })
        .transpose()
}

fn set<T: FromStr>(p: &mut BTreeMap<String, String>, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: fmt::Display,
{
    if let Some(v) = take(p, key)? {
        *slot = v;
    }
    Ok(())
}

fn parse_list<T: FromStr>(v: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Error::Config(format!("invalid entry `{s}` in `{key}`: {e}")))
        })
        .collect()
}

pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        let mapped = match c {
            'π' => "pi".to_string(),
            'φ' => "phi".to_string(),
            c if c.is_ascii_alphanumeric() => c.to_ascii_lowercase().to_string(),
            _ => "-".to_string(),
        };
        out.push_str(&mapped);
    }
    let mut collapsed = String::new();
    for part in out.split('-').filter(|s| !s.is_empty()) {
        if !collapsed.is_empty() {
            collapsed.push('-');
        }
        collapsed.push_str(part);
    }
    collapsed
}

/// `path` under the output root when relative.
pub fn resolve_output(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) => PathBuf::from(root).join(path),
        None => PathBuf::from("runs").join(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::parse("env = lqr\nmethod = mpc-mfrl\n").unwrap();
        assert_eq!(c, ExperimentConfig::preset(EnvName::Lqr, Method::MpcMfrl));
        assert_eq!(c.total_steps, 20_000);
    }

    #[test]
    fn overrides_and_comments() {
        let c = ExperimentConfig::parse(
            "env = pendulum # task\nmethod = mpc-cem\nseeds = 3, 4\nplanner.cem_iterations = 2\nmodel_hidden = 16\n",
        )
        .unwrap();
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.model.hidden, vec![16]);
        assert!(matches!(c.planner.sampling, SamplingStrategy::Cem(cem) if cem.iterations == 2));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "method = mf-s",
            "env = mars\nmethod = mf-s",
            "env = lqr\nmethod = mf-s\nbogus = 1",
            "env = lqr\nmethod = mf-s\ngamma = fast",
            "env = lqr\nmethod = mf-s\ngamma = 1.5",
            "env = lqr\nmethod = mf-s\ntotal_steps = 1010",
            "env = lqr\nmethod = mf-s\neval_period = 3000",
            "env = lqr\nmethod = mpc-mfrl\nplanner.elites = 500",
            "env = lqr\nmethod = mf-s\nmethod = mf-d",
            "env = lqr\nmethod = mf-s\nno equals sign",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn text_round_trip() {
        for m in Method::ALL {
            let mut c = ExperimentConfig::preset(EnvName::Pendulum, m);
            c.label = "R_φ(s_t) = V(s_t), H = 2".into();
            assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(slug("MPC-MFRL (Z = π)"), "mpc-mfrl-z-pi");
        assert_eq!(slug("MF(S)"), "mf-s");
    }
}
