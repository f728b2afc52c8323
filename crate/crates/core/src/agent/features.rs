use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::envs::EnvSpec;

/// Fixed input map for the policy and value networks: angle coordinates are
/// replaced by their cosine and sine, the rest pass through.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    state_dim: usize,
    angle_dims: Vec<usize>,
}

impl Features {
    pub fn new(state_dim: usize, angle_dims: &[usize]) -> Self {
        Self {
            state_dim,
            angle_dims: angle_dims.to_vec(),
        }
    }

    pub fn for_spec(spec: &EnvSpec) -> Self {
        Self::new(spec.state_dim, &spec.angle_dims)
    }

    pub fn identity(state_dim: usize) -> Self {
        Self::new(state_dim, &[])
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn dim(&self) -> usize {
        self.state_dim + self.angle_dims.len()
    }

    pub fn apply(&self, states: ArrayView2<f64>) -> Array2<f64> {
        if self.angle_dims.is_empty() {
            return states.to_owned();
        }
        let mut out = Array2::zeros((states.nrows(), self.dim()));
        for (src, mut dst) in states.rows().into_iter().zip(out.rows_mut()) {
            let mut k = 0;
            for (i, &v) in src.iter().enumerate() {
                if self.angle_dims.contains(&i) {
                    dst[k] = v.cos();
                    dst[k + 1] = v.sin();
                    k += 2;
                } else {
                    dst[k] = v;
                    k += 1;
                }
            }
        }
        out
    }

    pub fn apply_one(&self, state: &[f64]) -> Array2<f64> {
        let view = ArrayView2::from_shape((1, state.len()), state).expect("row vector");
        self.apply(view)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angles_become_unit_vectors() {
        let f = Features::new(3, &[1]);
        assert_eq!(f.dim(), 4);
        let out = f.apply_one(&[5.0, PI / 2.0, -1.0]);
        assert_eq!(out[[0, 0]], 5.0);
        assert!(out[[0, 1]].abs() < 1e-15);
        assert_eq!(out[[0, 2]], 1.0);
        assert_eq!(out[[0, 3]], -1.0);
    }

    #[test]
    fn full_turns_are_invisible() {
        let f = Features::new(2, &[0]);
        let a = f.apply_one(&[0.3, 1.0]);
        let b = f.apply_one(&[0.3 + 4.0 * PI, 1.0]);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
