use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::select::rank;
use crate::error::{Error, Result};

pub const CEM_STD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    /// Initial standard deviation as a fraction of the action half-range.
    pub init_std_fraction: f64,
    /// Weight of the newly fitted statistics in the smoothed update.
    pub smoothing: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 200,
            elite_fraction: 0.1,
            iterations: 5,
            init_std_fraction: 0.5,
            smoothing: 0.25,
        }
    }
}

impl CemConfig {
    pub fn elites(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).round() as usize).clamp(1, self.population.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.iterations == 0 {
            return Err(Error::Config("CEM needs a positive population and iteration count".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::Config(format!("CEM elite fraction must lie in (0, 1], got {}", self.elite_fraction)));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::Config(format!("CEM smoothing must lie in (0, 1], got {}", self.smoothing)));
        }
        if !(self.init_std_fraction > 0.0) {
            return Err(Error::Config("CEM initial std must be positive".into()));
        }
        Ok(())
    }
}

/// Diagonal Gaussian over flat decision vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CemState {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

/// Final population of a CEM run with its scores, and the distribution
/// refitted to that population's elites.
#[derive(Debug, Clone, PartialEq)]
pub struct CemOutcome {
    pub population: Array2<f64>,
    pub scores: Vec<f64>,
    pub state: CemState,
}

/// Fits the elites' mean and population standard deviation, blends them
/// into `state` with weight `smoothing` and floors the deviation.
pub fn refit(state: &CemState, elites: &Array2<f64>, smoothing: f64) -> CemState {
    let mean = elites.mean_axis(Axis(0)).expect("at least one elite");
    let std = elites.std_axis(Axis(0), 0.0);
    let blend = |new: &Array1<f64>, old: &Array1<f64>| new * smoothing + old * (1.0 - smoothing);
    CemState {
        mean: blend(&mean, &state.mean),
        std: blend(&std, &state.std).mapv(|s| s.max(CEM_STD_FLOOR)),
    }
}

/// Cross-entropy maximisation of `objective` over vectors inside
/// `[low, high]`. Samples are clipped to the bounds before scoring.
pub fn cem_optimize(
    mut objective: impl FnMut(&Array2<f64>) -> Result<Vec<f64>>,
    init: CemState,
    low: &Array1<f64>,
    high: &Array1<f64>,
    config: &CemConfig,
    rng: &mut impl rand::Rng,
) -> Result<CemOutcome> {
    config.validate()?;
    let dim = init.mean.len();
    let elites = config.elites();
    let mut state = init;
    let mut last = None;
    for _ in 0..config.iterations {
        let mut pop = Array2::zeros((config.population, dim));
        for mut row in pop.rows_mut() {
            for j in 0..dim {
                let z: f64 = StandardNormal.sample(rng);
                row[j] = (state.mean[j] + state.std[j] * z).clamp(low[j], high[j]);
            }
        }
        let scores = objective(&pop)?;
        if scores.len() != config.population {
            return Err(Error::shape("CEM scores", config.population, scores.len()));
        }
        let top = rank(&scores);
        let elite = pop.select(Axis(0), &top[..elites]);
        state = refit(&state, &elite, config.smoothing);
        last = Some((pop, scores));
    }
    let (population, scores) = last.expect("at least one iteration");
    Ok(CemOutcome {
        population,
        scores,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn full_elite_refit_is_population_mean() {
        let pop = array![[1.0, 2.0], [3.0, -2.0], [2.0, 0.0]];
        let s = CemState { mean: array![9.0, 9.0], std: array![1.0, 1.0] };
        let r = refit(&s, &pop, 1.0);
        assert_eq!(r.mean, array![2.0, 0.0]);
    }

    #[test]
    fn std_is_floored() {
        let pop = array![[1.0], [1.0]];
        let s = CemState { mean: array![0.0], std: array![0.0] };
        assert_eq!(refit(&s, &pop, 1.0).std[0], CEM_STD_FLOOR);
    }

    fn quadratic(c: Array1<f64>) -> impl FnMut(&Array2<f64>) -> Result<Vec<f64>> {
        move |pop: &Array2<f64>| Ok(pop.rows().into_iter().map(|r| -(&r - &c).mapv(|v| v * v).sum()).collect())
    }

    #[test]
    fn finds_quadratic_optimum() {
        let c = array![0.3, -0.6, 0.1];
        let cfg = CemConfig { population: 64, elite_fraction: 0.1, iterations: 10, init_std_fraction: 1.0, smoothing: 1.0 };
        let init = CemState { mean: Array1::zeros(3), std: Array1::from_elem(3, 1.0) };
        let (lo, hi) = (Array1::from_elem(3, -1.0), Array1::from_elem(3, 1.0));
        let out = cem_optimize(quadratic(c.clone()), init, &lo, &hi, &cfg, &mut rng::from_seed(0)).unwrap();
        for (m, t) in out.state.mean.iter().zip(c.iter()) {
            assert!((m - t).abs() < 0.05, "{m} vs {t}");
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let cfg = CemConfig { population: 20, ..Default::default() };
        let run = || {
            let init = CemState { mean: Array1::zeros(2), std: Array1::ones(2) };
            cem_optimize(quadratic(array![0.5, 0.5]), init, &array![-1.0, -1.0], &array![1.0, 1.0], &cfg, &mut rng::from_seed(3))
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn elite_count_is_at_least_one() {
        let cfg = CemConfig { population: 5, elite_fraction: 0.01, ..Default::default() };
        assert_eq!(cfg.elites(), 1);
        assert!(CemConfig { iterations: 0, ..Default::default() }.validate().is_err());
    }
}
