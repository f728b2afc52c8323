use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::planner::{SamplingStrategy, TerminalRewardMode};

use super::config::{Collector, ExperimentConfig, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Collector,
    Sampling,
    TerminalHorizon,
    SoftGreedy,
    ModelWidth,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 5] = [
        AblationAxis::Collector,
        AblationAxis::Sampling,
        AblationAxis::TerminalHorizon,
        AblationAxis::SoftGreedy,
        AblationAxis::ModelWidth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::Collector => "collector",
            AblationAxis::Sampling => "sampling",
            AblationAxis::TerminalHorizon => "terminal-horizon",
            AblationAxis::SoftGreedy => "soft-greedy",
            AblationAxis::ModelWidth => "model-width",
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationAxis::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| {
            let known: Vec<_> = AblationAxis::ALL.iter().map(|a| a.as_str()).collect();
            Error::Config(format!("unknown ablation axis `{s}` (expected one of {})", known.join(", ")))
        })
    }
}

/// Planning horizons of the terminal-value sweep.
pub const HORIZONS: [usize; 3] = [2, 5, 20];
/// Hidden-layer widths of the model sweep.
pub const MODEL_WIDTHS: [usize; 3] = [16, 64, 256];

/// MPC-MFRL variants of `base` along one axis, labelled with the legends of
/// the corresponding figure.
pub fn ablation_matrix(base: &ExperimentConfig, axis: AblationAxis) -> Result<Vec<ExperimentConfig>> {
    let mut root = base.clone();
    root.method = Method::MpcMfrl;
    let variant = |label: String, edit: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = root.clone();
        c.label = label;
        edit(&mut c);
        c
    };
    let out = match axis {
        AblationAxis::Collector => vec![
            variant("MPC-MFRL (Policy)".into(), &|c| c.collector = Collector::Policy),
            variant("MPC-MFRL (Random+MPC)".into(), &|c| c.collector = Collector::RandomMpc),
        ],
        AblationAxis::Sampling => vec![
            variant("MPC-MFRL (Z = π)".into(), &|c| {
                if !matches!(c.planner.sampling, SamplingStrategy::Policy { .. }) {
                    c.planner.sampling = SamplingStrategy::Policy { noise_scale: 1.0 };
                }
            }),
            variant("MPC-MFRL (Z = U)".into(), &|c| c.planner.sampling = SamplingStrategy::Uniform),
        ],
        AblationAxis::TerminalHorizon => [TerminalRewardMode::Value, TerminalRewardMode::Zero]
            .into_iter()
            .flat_map(|mode| {
                let name = match mode {
                    TerminalRewardMode::Value => "V(s_t)",
                    TerminalRewardMode::Zero => "0",
                };
                HORIZONS.map(|h| {
                    variant(format!("R_φ(s_t) = {name}, H = {h}"), &|c| {
                        c.planner.terminal = mode;
                        c.planner.horizon = h;
                    })
                })
            })
            .collect(),
        AblationAxis::SoftGreedy => vec![
            variant("w SG".into(), &|c| c.planner.elites = 10),
            variant("w/o SG".into(), &|c| c.planner.elites = 1),
        ],
        AblationAxis::ModelWidth => MODEL_WIDTHS
            .iter()
            .map(|&w| {
                variant(format!("Num. hidden units = {w}"), &|c| {
                    c.model.hidden = vec![w; c.model.hidden.len().max(1)];
                })
            })
            .collect(),
    };
    for c in &out {
        c.validate()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvName;
    use crate::harness::trainer::TrainingPlan;

    fn base() -> ExperimentConfig {
        ExperimentConfig::preset(EnvName::Pendulum, Method::MpcMfrl)
    }

    #[test]
    fn axis_sizes() {
        let n = |a| ablation_matrix(&base(), a).unwrap().len();
        assert_eq!(n(AblationAxis::TerminalHorizon), 6);
        assert_eq!(n(AblationAxis::SoftGreedy), 2);
        assert_eq!(n(AblationAxis::ModelWidth), 3);
        assert_eq!(n(AblationAxis::Collector), 2);
        assert_eq!(n(AblationAxis::Sampling), 2);
    }

    #[test]
    fn unknown_axis_is_config_error() {
        assert!(matches!("depth".parse::<AblationAxis>(), Err(Error::Config(_))));
        for a in AblationAxis::ALL {
            assert_eq!(a.as_str().parse::<AblationAxis>().unwrap(), a);
        }
    }

    #[test]
    fn variants_differ_only_along_axis() {
        let v = ablation_matrix(&base(), AblationAxis::SoftGreedy).unwrap();
        assert_eq!((v[0].planner.elites, v[1].planner.elites), (10, 1));
        let mut a = v[0].clone();
        a.label = v[1].label.clone();
        a.planner.elites = 1;
        assert_eq!(a, v[1]);
        let th = ablation_matrix(&base(), AblationAxis::TerminalHorizon).unwrap();
        assert_eq!(th[0].label, "R_φ(s_t) = V(s_t), H = 2");
        assert_eq!(th[5].planner.terminal, TerminalRewardMode::Zero);
        assert_eq!(th[5].planner.horizon, 20);
    }

    #[test]
    fn every_axis_forms_a_runnable_group() {
        for a in AblationAxis::ALL {
            let configs = ablation_matrix(&base(), a).unwrap();
            let plan = TrainingPlan::new(&configs).unwrap();
            assert_eq!(plan.agents.len(), 1, "{a}");
        }
    }
}
