use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer; `weights` is `(in, out)` so a batch maps as `x W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Feed-forward network: tanh on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Activations kept from a forward pass: `activations[0]` is the input,
/// `activations[i]` the output of layer `i - 1`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input at least")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.activations.pop().expect("cache holds the input at least")
    }
}

impl Mlp {
    /// Uniform fan-in initialisation: `W ~ U(-gain / sqrt(fan_in), gain / sqrt(fan_in))`,
    /// zero biases. The output layer is additionally scaled by `output_scale`.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        gain: f64,
        output_scale: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let sizes = layer_sizes(input_dim, hidden, output_dim);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = gain / (w[0] as f64).sqrt();
                let scale = if i == last { output_scale } else { 1.0 };
                let weights = Array2::from_shape_fn((w[0], w[1]), |_| {
                    rng.random_range(-bound..bound) * scale
                });
                Layer {
                    weights,
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        let layers = layer_sizes(input_dim, hidden, output_dim)
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::shape("layer bias", layer.output_dim(), layer.bias.len()));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.input_dim() != layer.output_dim() {
                    return Err(Error::shape(
                        "layer chaining",
                        layer.output_dim(),
                        next.input_dim(),
                    ));
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::output_dim)
            .collect()
    }

    /// `[input, hidden..., output]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::output_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::shape("mlp input width", self.input_dim(), input.ncols()));
        }
        Ok(())
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut x = affine(&input, &self.layers[0]);
        if last > 0 {
            x.mapv_inplace(f64::tanh);
        }
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            x = affine(&x.view(), layer);
            if i < last {
                x.mapv_inplace(f64::tanh);
            }
        }
        Ok(x)
    }

    /// Forward pass on a single input vector.
    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|_| Error::shape("mlp input", self.input_dim(), input.len()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(&activations[i].view(), layer);
            if i < last {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Gradient of `sum(output_grad * output)` with respect to every parameter,
    /// flattened in [`Mlp::params`] order.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Array1<f64>> {
        let out = cache.output();
        if output_grad.dim() != out.dim() {
            return Err(Error::shape(
                "mlp output gradient",
                format!("{:?}", out.dim()),
                format!("{:?}", output_grad.dim()),
            ));
        }
        let mut grads = vec![Array1::zeros(0); self.layers.len()];
        let mut delta = output_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[i];
            let dw = input.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            let mut flat = Vec::with_capacity(layer.num_params());
            flat.extend(dw.iter().copied());
            flat.extend(db.iter().copied());
            grads[i] = Array1::from(flat);
            if i > 0 {
                let mut prev = delta.dot(&layer.weights.t());
                Zip::from(&mut prev)
                    .and(input)
                    .for_each(|d, &a| *d *= 1.0 - a * a);
                delta = prev;
            }
        }
        let mut all = Vec::with_capacity(self.num_params());
        for g in grads {
            all.extend(g);
        }
        Ok(Array1::from(all))
    }

    /// Directional derivative of the output batch along a parameter-space
    /// `direction` (forward mode), evaluated at the cached inputs.
    pub fn jvp(&self, cache: &ForwardCache, direction: &[f64]) -> Result<Array2<f64>> {
        if direction.len() != self.num_params() {
            return Err(Error::shape("mlp jvp direction", self.num_params(), direction.len()));
        }
        let last = self.layers.len() - 1;
        let rows = cache.activations[0].nrows();
        let mut tangent: Option<Array2<f64>> = None;
        let mut offset = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            let (n_in, n_out) = layer.weights.dim();
            let dw = ArrayView2::from_shape((n_in, n_out), &direction[offset..offset + n_in * n_out])
                .expect("slice length matches layer");
            offset += n_in * n_out;
            let db = &direction[offset..offset + n_out];
            offset += n_out;

            let mut dz = cache.activations[i].dot(&dw);
            if let Some(t) = &tangent {
                dz += &t.dot(&layer.weights);
            }
            for mut row in dz.rows_mut() {
                for (v, b) in row.iter_mut().zip(db) {
                    *v += b;
                }
            }
            if i < last {
                Zip::from(&mut dz)
                    .and(&cache.activations[i + 1])
                    .for_each(|d, &a| *d *= 1.0 - a * a);
            }
            debug_assert_eq!(dz.nrows(), rows);
            tangent = Some(dz);
        }
        Ok(tangent.expect("at least one layer"))
    }

    /// All parameters flattened: per layer, weights row-major then bias.
    pub fn params(&self) -> Array1<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            flat.extend(layer.weights.iter().copied());
            flat.extend(layer.bias.iter().copied());
        }
        Array1::from(flat)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("mlp parameters", self.num_params(), flat.len()));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = flat[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = flat[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

fn layer_sizes(input_dim: usize, hidden: &[usize], output_dim: usize) -> Vec<usize> {
    std::iter::once(input_dim)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output_dim))
        .collect()
}

fn affine(x: &ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut z = x.dot(&layer.weights);
    z += &layer.bias;
    z
}
