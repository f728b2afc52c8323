use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension mean and (floored) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Stats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
        }
    }

    pub fn fit(data: ArrayView2<f64>) -> Self {
        let n = data.nrows();
        if n == 0 {
            return Self::identity(data.ncols());
        }
        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let std = data
            .var_axis(Axis(0), 0.0)
            .mapv(|v| v.sqrt().max(STD_FLOOR));
        Self { mean, std }
    }

    pub fn normalize(&self, data: ArrayView2<f64>) -> Array2<f64> {
        let mut out = &data - &self.mean;
        out /= &self.std;
        out
    }

    pub fn denormalize(&self, data: ArrayView2<f64>) -> Array2<f64> {
        let mut out = &data * &self.std;
        out += &self.mean;
        out
    }
}

/// Input and output statistics of a dynamics model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub state: Stats,
    pub action: Stats,
    /// Statistics of the network target: state deltas, or next states in
    /// absolute mode.
    pub output: Stats,
}

impl Normalizer {
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state: Stats::identity(state_dim),
            action: Stats::identity(action_dim),
            output: Stats::identity(state_dim),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn std_is_floored() {
        let s = Stats::fit(array![[1.0, 2.0], [1.0, 4.0]].view());
        assert_eq!(s.std[0], STD_FLOOR);
        assert_eq!(s.std[1], 1.0);
        assert_eq!(s.mean, array![1.0, 3.0]);
    }

    #[test]
    fn normalize_round_trip() {
        let data = array![[1.0, -2.0], [3.0, 5.0], [0.5, 0.0]];
        let s = Stats::fit(data.view());
        let back = s.denormalize(s.normalize(data.view()).view());
        for (a, b) in back.iter().zip(data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
