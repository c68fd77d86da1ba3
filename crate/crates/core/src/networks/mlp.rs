use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{Activation, NetworkError};
use crate::autodiff::{Matrix, Ops};
use crate::math;

/// Fully connected network shape. `hidden_layers` counts the activated
/// layers; one affine output layer follows them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
}

impl MlpConfig {
    /// Scalar network `u(t, x)` over `dim` spatial coordinates, time first.
    pub fn scalar_field(dim: usize, hidden_layers: usize, hidden_width: usize) -> Self {
        Self {
            input_dim: dim + 1,
            output_dim: 1,
            hidden_layers,
            hidden_width,
            activation: Activation::Sine,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NetworkError::Config("input and output dimensions must be positive"));
        }
        if self.hidden_layers == 0 {
            return Err(NetworkError::Config("at least one hidden layer is required"));
        }
        if self.hidden_width == 0 {
            return Err(NetworkError::Config("hidden width must be positive"));
        }
        Ok(())
    }

    /// `(rows, cols)` of every weight matrix, input layer first.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            shapes.push((self.hidden_width, fan_in));
            fan_in = self.hidden_width;
        }
        shapes.push((self.output_dim, fan_in));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.weight_shapes().iter().map(|(r, c)| r * c + r).sum()
    }
}

/// Weights `W[k]` (`out x in`) and biases `b[k]` (`1 x out`).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub config: MlpConfig,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    math::sqrt(6.0 / (fan_in + fan_out) as f64)
}

pub(crate) fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl MlpParams {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(config: MlpConfig, seed: u64) -> Result<Self, NetworkError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(config, &mut rng)
    }

    pub(crate) fn init_with(config: MlpConfig, rng: &mut impl RngCore) -> Result<Self, NetworkError> {
        config.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (rows, cols) in config.weight_shapes() {
            let bound = glorot_bound(cols, rows);
            weights.push(Matrix::from_fn(rows, cols, |_, _| {
                (2.0 * uniform01(rng) - 1.0) * bound
            }));
            biases.push(Matrix::zeros(1, rows));
        }
        Ok(Self {
            config,
            weights,
            biases,
        })
    }

    pub fn zeros(config: MlpConfig) -> Result<Self, NetworkError> {
        config.validate()?;
        let shapes = config.weight_shapes();
        Ok(Self {
            config,
            weights: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            biases: shapes.iter().map(|&(r, _)| Matrix::zeros(1, r)).collect(),
        })
    }

    /// Tensors in canonical order `W0, b0, W1, b1, ...`.
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    /// Rebuilds from tensors in canonical order, checking shapes.
    pub fn from_tensors(config: MlpConfig, tensors: Vec<Matrix>) -> Result<Self, NetworkError> {
        config.validate()?;
        let shapes = config.weight_shapes();
        if tensors.len() != 2 * shapes.len() {
            return Err(NetworkError::Shape("wrong number of tensors"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut it = tensors.into_iter();
        for (rows, cols) in shapes {
            let (w, b) = (it.next().unwrap(), it.next().unwrap());
            if w.shape() != (rows, cols) || b.shape() != (1, rows) {
                return Err(NetworkError::Shape("layer shapes do not chain"));
            }
            weights.push(w);
            biases.push(b);
        }
        Ok(Self {
            config,
            weights,
            biases,
        })
    }

    /// Binds every tensor through `make` (leaves on a tape, or constants).
    pub fn bind<O: Ops>(&self, ops: &O, mut make: impl FnMut(Matrix) -> O::T) -> BoundMlp<O::T> {
        let weights: Vec<O::T> = self.weights.iter().map(|w| make(w.clone())).collect();
        let biases: Vec<O::T> = self.biases.iter().map(|b| make(b.clone())).collect();
        let transposed = weights.iter().map(|w| ops.transpose(w)).collect();
        BoundMlp {
            activation: self.config.activation,
            weights,
            transposed,
            biases,
        }
    }
}

/// Network tensors bound to an [`Ops`] backend, with transposed weights
/// cached for batched evaluation.
#[derive(Debug, Clone)]
pub struct BoundMlp<T> {
    pub activation: Activation,
    pub weights: Vec<T>,
    transposed: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Clone> BoundMlp<T> {
    /// Leaf handles in canonical order.
    pub fn tensors(&self) -> Vec<T> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.clone(), b.clone()])
            .collect()
    }

    /// Batched forward pass; `input` is `m x input_dim`.
    pub fn forward<O: Ops<T = T>>(&self, ops: &O, input: &T) -> T {
        let last = self.weights.len() - 1;
        let mut h = input.clone();
        for k in 0..last {
            let pre = ops.add_row(&ops.matmul(&h, &self.transposed[k]), &self.biases[k]);
            h = self.activation.apply(ops, &pre);
        }
        ops.add_row(&ops.matmul(&h, &self.transposed[last]), &self.biases[last])
    }

    /// Forward pass plus the input gradient of a scalar-output network by
    /// explicit backpropagation, without a recording sweep.
    pub fn forward_with_input_grad<O: Ops<T = T>>(&self, ops: &O, input: &T) -> (T, T) {
        let last = self.weights.len() - 1;
        let mut h = input.clone();
        let mut pre_acts = Vec::with_capacity(last);
        let mut acts = Vec::with_capacity(last);
        for k in 0..last {
            let pre = ops.add_row(&ops.matmul(&h, &self.transposed[k]), &self.biases[k]);
            h = self.activation.apply(ops, &pre);
            pre_acts.push(pre);
            acts.push(h.clone());
        }
        let out = ops.add_row(&ops.matmul(&h, &self.transposed[last]), &self.biases[last]);
        let rows = ops.shape(input).0;
        let mut delta = ops.broadcast_rows(&self.weights[last], rows);
        for k in (0..last).rev() {
            let slope = self.activation.derivative(ops, &pre_acts[k], &acts[k]);
            delta = ops.matmul(&ops.mul(&delta, &slope), &self.weights[k]);
        }
        (out, delta)
    }
}
