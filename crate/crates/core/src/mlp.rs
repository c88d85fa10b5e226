//! Fully connected tanh network with hand-written reverse mode.
//!
//! Hidden layers use `tanh`, the output layer is affine. A network whose
//! `layer_dims` has a single entry has no layers and is the identity map.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Hidden sizes used by default after the input layer.
pub const DEFAULT_HIDDEN: [usize; 3] = [256, 256, 64];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlpError {
    #[error("invalid layer dims {0:?}: every entry must be at least 1")]
    InvalidDims(Vec<usize>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
}

/// Intermediate activations from a forward pass over a batch.
#[derive(Debug, Clone)]
pub struct MlpTape {
    /// `activations[0]` is the input; `activations[i]` the output of layer `i`.
    activations: Vec<Array2<f64>>,
}

impl MlpTape {
    /// Network output for the batch (`batch × n_output`).
    pub fn output(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("tape always holds the input")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Uniform init on `±√(6/(fan_in + fan_out))`.
pub(crate) fn glorot_uniform<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Array2<f64> {
    let half = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-half..half))
}

impl MlpParams {
    /// Seeded initialization; biases start at zero.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self, MlpError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(layer_dims, &mut rng)
    }

    pub(crate) fn init_with<R: Rng + ?Sized>(
        layer_dims: &[usize],
        rng: &mut R,
    ) -> Result<Self, MlpError> {
        if layer_dims.is_empty() || layer_dims.contains(&0) {
            return Err(MlpError::InvalidDims(layer_dims.to_vec()));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer {
                weight: glorot_uniform(w[1], w[0], w[0], w[1], rng),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self, MlpError> {
        if layer_dims.is_empty() || layer_dims.contains(&0) {
            return Err(MlpError::InvalidDims(layer_dims.to_vec()));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.layer_dims).expect("dims already validated")
    }

    /// Assembles parameters from explicit layers, checking shapes.
    pub fn from_layers(layer_dims: Vec<usize>, layers: Vec<Layer>) -> Result<Self, MlpError> {
        if layer_dims.is_empty() || layer_dims.contains(&0) || layers.len() + 1 != layer_dims.len()
        {
            return Err(MlpError::InvalidDims(layer_dims));
        }
        for (layer, w) in layers.iter().zip(layer_dims.windows(2)) {
            if layer.weight.dim() != (w[1], w[0]) || layer.bias.len() != w[1] {
                return Err(MlpError::InvalidDims(layer_dims));
            }
        }
        Ok(Self { layer_dims, layers })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn n_input(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_output(&self) -> usize {
        *self.layer_dims.last().expect("nonempty")
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: ArrayView1<f64>) -> Result<(Array1<f64>, MlpTape), MlpError> {
        let batch = input.insert_axis(Axis(0));
        let (out, tape) = self.forward_batch(batch)?;
        Ok((out.row(0).to_owned(), tape))
    }

    /// Forward pass over `batch × n_input` rows.
    pub fn forward_batch(
        &self,
        inputs: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, MlpTape), MlpError> {
        if inputs.ncols() != self.n_input() {
            return Err(MlpError::DimMismatch {
                expected: self.n_input(),
                got: inputs.ncols(),
            });
        }
        let last = self.layers.len();
        let mut activations = Vec::with_capacity(last + 1);
        activations.push(inputs.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weight.t()) + &layer.bias;
            if i + 1 < last {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        let out = activations[last].clone();
        Ok((out, MlpTape { activations }))
    }

    /// Reverse pass: gradients of `Σ_rows ⟨grad_output_row, DNN(input_row)⟩`
    /// with respect to every parameter (summed over the batch) and to each
    /// input row.
    pub fn backward(
        &self,
        tape: &MlpTape,
        grad_output: ArrayView2<f64>,
    ) -> Result<(MlpParams, Array2<f64>), MlpError> {
        if tape.activations.len() != self.layers.len() + 1 {
            return Err(MlpError::DimMismatch {
                expected: self.layers.len() + 1,
                got: tape.activations.len(),
            });
        }
        if grad_output.dim() != (tape.batch_size(), self.n_output()) {
            return Err(MlpError::DimMismatch {
                expected: self.n_output(),
                got: grad_output.ncols(),
            });
        }
        let last = self.layers.len();
        let mut grads = self.zeros_like();
        let mut delta = grad_output.to_owned();
        for i in (0..last).rev() {
            if i + 1 < last {
                let a = &tape.activations[i + 1];
                delta.zip_mut_with(a, |d, &t| *d *= 1.0 - t * t);
            }
            let g = &mut grads.layers[i];
            g.weight.assign(&delta.t().dot(&tape.activations[i]));
            g.bias.assign(&delta.sum_axis(Axis(0)));
            delta = delta.dot(&self.layers[i].weight);
        }
        Ok((grads, delta))
    }

    /// Single-example form of [`backward`](Self::backward).
    pub fn backward_single(
        &self,
        tape: &MlpTape,
        grad_output: ArrayView1<f64>,
    ) -> Result<(MlpParams, Array1<f64>), MlpError> {
        let (g, gi) = self.backward(tape, grad_output.insert_axis(Axis(0)))?;
        Ok((g, gi.row(0).to_owned()))
    }

    /// Flat views of every tensor: per layer, weight (row-major) then bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }
}
