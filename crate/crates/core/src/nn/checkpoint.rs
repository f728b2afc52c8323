//! Flat network serialization.
//!
//! A checkpoint is a JSON object `{"layer_sizes": [in, h1, ..., out],
//! "values": [...]}` where `values` lists, per layer, the `(in, out)` weight
//! matrix in row-major order followed by the bias.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Layer, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub layer_sizes: Vec<usize>,
    pub values: Vec<f64>,
}

impl From<&Mlp> for NetworkCheckpoint {
    fn from(net: &Mlp) -> Self {
        Self {
            layer_sizes: net.sizes(),
            values: net.params().to_vec(),
        }
    }
}

impl NetworkCheckpoint {
    pub fn to_mlp(&self) -> Result<Mlp> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config("checkpoint needs at least two layer sizes".into()));
        }
        let expected: usize = self
            .layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        if expected != self.values.len() {
            return Err(Error::shape("checkpoint values", expected, self.values.len()));
        }
        let mut offset = 0;
        let mut layers = Vec::new();
        for w in self.layer_sizes.windows(2) {
            let n = w[0] * w[1];
            let weights = Array2::from_shape_vec((w[0], w[1]), self.values[offset..offset + n].to_vec())
                .expect("length checked above");
            offset += n;
            let bias = Array1::from(self.values[offset..offset + w[1]].to_vec());
            offset += w[1];
            layers.push(Layer { weights, bias });
        }
        Mlp::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }
}
