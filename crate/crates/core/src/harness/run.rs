//! Running a set of experiment configs over their seeds, with checkpoints
//! after every evaluation so a run can be resumed.

use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dynamics::TransitionDataset;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

use super::config::{resolve_output, ExperimentConfig};
use super::curve::{best_so_far_curve, CurvePoint, EvalRecord};
use super::evaluate::{evaluate_offline, EvalSeeds, Snapshots};
use super::output;
use super::trainer::{HeldOutRecord, SeedState, TrainingPlan};

const STATE_FILE: &str = "state.json";
const TEST_SET_FILE: &str = "testset.csv";

/// Seed of the run that generates the held-out set.
pub const TEST_SET_SEED: u64 = 0x7465_7374_7365_7400;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Continue each seed from its last checkpoint when one exists.
    pub resume: bool,
    /// Return after writing this many checkpoints in this call.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    Stopped,
}

#[derive(Debug)]
pub struct RunSummary {
    pub status: RunStatus,
    pub dir: PathBuf,
    pub states: Vec<SeedState>,
    pub curves: Vec<(String, Vec<CurvePoint>)>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    plan: TrainingPlan,
    state: SeedState,
}

/// Runs one config in its resolved output directory.
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<RunSummary> {
    run_group(std::slice::from_ref(config), &resolve_output(&config.output_dir), options)
}

/// Runs configs that share budget, schedule and seeds in one pass, training
/// each distinct trainer once per seed.
pub fn run_group(configs: &[ExperimentConfig], dir: &Path, options: RunOptions) -> Result<RunSummary> {
    let plan = TrainingPlan::new(configs)?;
    let base = &configs[0];
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for c in configs {
        let path = dir.join(format!("{}.cfg", c.slug()));
        std::fs::write(&path, c.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    let env = plan.env.build();
    let test_set = if base.test_set_size > 0 && !plan.models.is_empty() {
        Some(test_set(base, dir)?)
    } else {
        None
    };

    let mut states = Vec::new();
    let mut written = 0;
    for &seed in &base.seeds {
        let seed_dir = dir.join(format!("seed-{seed}"));
        let mut state = if options.resume && seed_dir.join(STATE_FILE).exists() {
            load_checkpoint(&seed_dir, Some(&plan))?.1
        } else {
            SeedState::new(&plan, seed)
        };
        while state.steps < plan.total_steps {
            let target = (state.steps / base.eval_period + 1) * base.eval_period;
            state.advance_to(env.as_ref(), plan.steps_per_iteration, target)?;
            checkpoint(&plan, &mut state, env.as_ref(), test_set.as_ref())?;
            save_checkpoint(&seed_dir, &plan, &state)?;
            written += 1;
            if options.stop_after == Some(written) {
                return Ok(RunSummary {
                    status: RunStatus::Stopped,
                    dir: dir.to_path_buf(),
                    states,
                    curves: Vec::new(),
                });
            }
        }
        states.push(state);
    }
    let curves = write_outputs(dir, &plan, &states)?;
    Ok(RunSummary {
        status: RunStatus::Complete,
        dir: dir.to_path_buf(),
        states,
        curves,
    })
}

/// Evaluates every member and scores every model on the test set.
fn checkpoint(
    plan: &TrainingPlan,
    state: &mut SeedState,
    env: &dyn Environment,
    test_set: Option<&TransitionDataset>,
) -> Result<()> {
    let mut evals = Vec::new();
    let mut held_out = Vec::new();
    for m in &plan.members {
        let c = &m.config;
        let snapshots = snapshots(state, m.agent.as_deref(), m.model.as_deref());
        let seeds = EvalSeeds::at_checkpoint(state.seed, state.steps, &c.label);
        let returns = evaluate_offline(env, &snapshots, c.method, &c.planner, c.eval_episodes, seeds)?;
        evals.push(EvalRecord::new(&c.label, state.seed, state.steps, returns));
        if let (Some(test), Some(model)) = (test_set, snapshots.model) {
            held_out.push(HeldOutRecord {
                label: c.label.clone(),
                collector: c.collector,
                seed: state.seed,
                steps: state.steps,
                error: model.held_out_error(test)?,
            });
        }
    }
    state.evals.extend(evals);
    state.held_out.extend(held_out);
    Ok(())
}

fn snapshots<'a>(state: &'a SeedState, agent: Option<&str>, model: Option<&str>) -> Snapshots<'a> {
    let agent = agent.map(|id| &state.agents[id].agent);
    Snapshots {
        policy: agent.map(|a| &a.policy),
        value: agent.map(|a| &a.value),
        model: model.map(|id| &state.models[id].model),
    }
}

/// Re-runs the evaluations of a saved checkpoint.
pub fn evaluate_checkpoint(seed_dir: &Path) -> Result<Vec<EvalRecord>> {
    let (plan, state) = load_checkpoint(seed_dir, None)?;
    let env = plan.env.build();
    plan.members
        .iter()
        .map(|m| {
            let c = &m.config;
            let snapshots = snapshots(&state, m.agent.as_deref(), m.model.as_deref());
            let seeds = EvalSeeds::at_checkpoint(state.seed, state.steps, &c.label);
            let returns = evaluate_offline(env.as_ref(), &snapshots, c.method, &c.planner, c.eval_episodes, seeds)?;
            Ok(EvalRecord::new(&c.label, state.seed, state.steps, returns))
        })
        .collect()
}

fn dataset_path(seed_dir: &Path, id: &str) -> PathBuf {
    seed_dir.join(format!("data-{id}.csv"))
}

fn save_checkpoint(seed_dir: &Path, plan: &TrainingPlan, state: &SeedState) -> Result<()> {
    std::fs::create_dir_all(seed_dir).map_err(|e| Error::io(seed_dir, e))?;
    for (id, m) in &state.models {
        m.dataset().write_csv(&dataset_path(seed_dir, id))?;
    }
    let ckpt = Checkpoint {
        plan: plan.clone(),
        state: state.clone(),
    };
    let text = serde_json::to_string(&ckpt).map_err(|e| Error::Numerical(e.to_string()))?;
    let tmp = seed_dir.join(format!("{STATE_FILE}.tmp"));
    let path = seed_dir.join(STATE_FILE);
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

/// Loads a seed checkpoint. With `expected`, the stored plan must match it.
fn load_checkpoint(seed_dir: &Path, expected: Option<&TrainingPlan>) -> Result<(TrainingPlan, SeedState)> {
    let path = seed_dir.join(STATE_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let Checkpoint { plan, mut state } = serde_json::from_str(&text).map_err(|e| Error::format(&path, e))?;
    if expected.is_some_and(|e| !same_training(e, &plan)) {
        return Err(Error::Config(format!(
            "checkpoint in {} was written by a different configuration",
            seed_dir.display()
        )));
    }
    let spec = plan.env.build().spec().clone();
    for (id, m) in &mut state.models {
        let path = dataset_path(seed_dir, id);
        let mut data = TransitionDataset::read_csv(&path, spec.state_dim, spec.action_dim)?;
        if data.len() < m.dataset_len {
            return Err(Error::format(&path, format!("expected {} transitions, found {}", m.dataset_len, data.len())));
        }
        // Rows past the recorded length belong to a checkpoint that was
        // interrupted before its state was written.
        data.truncate(m.dataset_len);
        m.dataset = Some(data);
    }
    Ok((plan, state))
}

/// Plans equal up to the list of seeds, which only decides which seed
/// directories exist.
fn same_training(a: &TrainingPlan, b: &TrainingPlan) -> bool {
    let strip = |p: &TrainingPlan| {
        let mut p = p.clone();
        for m in &mut p.members {
            m.config.seeds.clear();
        }
        p
    };
    strip(a) == strip(b)
}

/// The held-out set: `test_set_size` transitions sampled from a
/// policy-collected dataset and as many from a random-mpc-collected one,
/// both gathered by an independent run over the full budget. Cached in `dir`.
pub fn test_set(base: &ExperimentConfig, dir: &Path) -> Result<TransitionDataset> {
    let env = base.env.build();
    let spec = env.spec();
    let path = dir.join(TEST_SET_FILE);
    if path.exists() {
        let data = TransitionDataset::read_csv(&path, spec.state_dim, spec.action_dim)?;
        if data.len() == 2 * base.test_set_size {
            return Ok(data);
        }
    }
    let (plan, policy, random) = TrainingPlan::for_test_set(base)?;
    let mut state = SeedState::new(&plan, TEST_SET_SEED);
    state.advance_to(env.as_ref(), plan.steps_per_iteration, plan.total_steps)?;
    let mut out = TransitionDataset::new(spec.state_dim, spec.action_dim);
    let mut r = rng::stream(TEST_SET_SEED, &[tag::TEST_SET]);
    for id in [&policy, &random] {
        let source = state.models[id].dataset();
        if base.test_set_size > source.len() {
            return Err(Error::Config(format!(
                "test_set_size {} exceeds the {} transitions collected",
                base.test_set_size,
                source.len()
            )));
        }
        for i in index::sample(&mut r, source.len(), base.test_set_size) {
            out.push(source.transitions()[i].clone())?;
        }
    }
    out.write_csv(&path)?;
    Ok(out)
}

fn write_outputs(dir: &Path, plan: &TrainingPlan, states: &[SeedState]) -> Result<Vec<(String, Vec<CurvePoint>)>> {
    let mut legend = Vec::new();
    let mut curves = Vec::new();
    for m in &plan.members {
        let c = &m.config;
        let per_seed: Vec<Vec<EvalRecord>> = states
            .iter()
            .map(|s| s.evals.iter().filter(|r| r.label == c.label).cloned().collect())
            .collect();
        let flat: Vec<EvalRecord> = per_seed.iter().flatten().cloned().collect();
        output::write_evals(&dir.join(format!("{}_evals.csv", c.slug())), &flat)?;
        let curve = best_so_far_curve(&per_seed, c.bootstrap_resamples, rng::hash_str(&c.label))?;
        output::write_curve(&dir.join(format!("{}_curve.csv", c.slug())), &curve)?;
        legend.push((c.slug(), c.label.clone(), c.method.to_string()));
        curves.push((c.label.clone(), curve));
    }
    output::write_legend(&dir.join(output::LEGEND_FILE), &legend)?;
    let held_out: Vec<HeldOutRecord> = states.iter().flat_map(|s| s.held_out.iter().cloned()).collect();
    if !held_out.is_empty() {
        output::write_held_out(&dir.join(output::HELD_OUT_FILE), &held_out)?;
    }
    if states.iter().any(|s| !s.agents.is_empty()) {
        output::write_agent_log(&dir.join(output::AGENT_LOG_FILE), states)?;
    }
    Ok(curves)
}
