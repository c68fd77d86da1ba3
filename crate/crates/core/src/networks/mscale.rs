use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use super::mlp::{glorot_bound, uniform01, BoundMlp, MlpConfig, MlpParams};
use super::NetworkError;
use crate::autodiff::{Matrix, Ops};

/// Parallel scalar-output subnetworks on componentwise-scaled inputs:
/// `u = Σ_i W_i f_i(α_i ∘ (t, x)) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MscaleConfig {
    pub subnet: MlpConfig,
    /// One scale vector per subnetwork, each of length `subnet.input_dim`.
    pub scales: Vec<Vec<f64>>,
}

impl MscaleConfig {
    /// Subnetworks that scale only the time coordinate, by `time_scales[i]`.
    pub fn time_scaled(subnet: MlpConfig, time_scales: &[f64]) -> Self {
        let scales = time_scales
            .iter()
            .map(|&a| {
                let mut v = vec![1.0; subnet.input_dim];
                v[0] = a;
                v
            })
            .collect();
        Self { subnet, scales }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        self.subnet.validate()?;
        if self.subnet.output_dim != 1 {
            return Err(NetworkError::Config("multiscale subnetworks must be scalar-valued"));
        }
        if self.scales.is_empty() {
            return Err(NetworkError::Config("at least one subnetwork is required"));
        }
        if self.scales.iter().any(|s| s.len() != self.subnet.input_dim) {
            return Err(NetworkError::Shape("scale vector length differs from input dimension"));
        }
        if self.scales.iter().flatten().any(|a| !a.is_finite()) {
            return Err(NetworkError::Config("scales must be finite"));
        }
        Ok(())
    }

    pub fn subnet_count(&self) -> usize {
        self.scales.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.subnet_count() * (self.subnet.parameter_count() + 1) + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MscaleParams {
    pub config: MscaleConfig,
    pub subnets: Vec<MlpParams>,
    /// `1 x 1` combination weight per subnetwork.
    pub combination: Vec<Matrix>,
    /// `1 x 1` shared output bias.
    pub bias: Matrix,
}

impl MscaleParams {
    /// Glorot-uniform subnetworks and combination weights, zero biases.
    pub fn init(config: MscaleConfig, seed: u64) -> Result<Self, NetworkError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.subnet_count();
        let subnets = (0..n)
            .map(|_| MlpParams::init_with(config.subnet, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let bound = glorot_bound(n, 1);
        let combination = (0..n)
            .map(|_| Matrix::scalar((2.0 * uniform01(&mut rng) - 1.0) * bound))
            .collect();
        Ok(Self {
            config,
            subnets,
            combination,
            bias: Matrix::scalar(0.0),
        })
    }

    /// Tensors in canonical order: each subnetwork's, then the
    /// combination weights, then the output bias.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.subnets.iter().flat_map(|s| s.tensors()).collect();
        out.extend(self.combination.iter());
        out.push(&self.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> =
            self.subnets.iter_mut().flat_map(|s| s.tensors_mut()).collect();
        out.extend(self.combination.iter_mut());
        out.push(&mut self.bias);
        out
    }

    pub fn from_tensors(config: MscaleConfig, tensors: Vec<Matrix>) -> Result<Self, NetworkError> {
        config.validate()?;
        let n = config.subnet_count();
        let per = 2 * (config.subnet.hidden_layers + 1);
        if tensors.len() != n * per + n + 1 {
            return Err(NetworkError::Shape("wrong number of tensors"));
        }
        let mut it = tensors.into_iter();
        let mut subnets = Vec::with_capacity(n);
        for _ in 0..n {
            let chunk: Vec<Matrix> = it.by_ref().take(per).collect();
            subnets.push(MlpParams::from_tensors(config.subnet, chunk)?);
        }
        let combination: Vec<Matrix> = it.by_ref().take(n).collect();
        let bias = it.next().unwrap();
        if combination.iter().chain([&bias]).any(|m| m.shape() != (1, 1)) {
            return Err(NetworkError::Shape("combination weights and bias must be 1x1"));
        }
        Ok(Self {
            config,
            subnets,
            combination,
            bias,
        })
    }

    pub fn bind<O: Ops>(&self, ops: &O, mut make: impl FnMut(Matrix) -> O::T) -> BoundMscale<O::T> {
        let subnets = self.subnets.iter().map(|s| s.bind(ops, &mut make)).collect();
        let combination = self.combination.iter().map(|w| make(w.clone())).collect();
        let bias = make(self.bias.clone());
        let scales = self
            .config
            .scales
            .iter()
            .map(|a| ops.constant(Matrix::row_vector(a.clone())))
            .collect();
        BoundMscale {
            subnets,
            combination,
            bias,
            scales,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundMscale<T> {
    subnets: Vec<BoundMlp<T>>,
    combination: Vec<T>,
    bias: T,
    scales: Vec<T>,
}

impl<T: Clone> BoundMscale<T> {
    pub fn tensors(&self) -> Vec<T> {
        let mut out: Vec<T> = self.subnets.iter().flat_map(|s| s.tensors()).collect();
        out.extend(self.combination.iter().cloned());
        out.push(self.bias.clone());
        out
    }

    pub fn forward<O: Ops<T = T>>(&self, ops: &O, input: &T) -> T {
        let rows = ops.shape(input).0;
        let mut acc: Option<T> = None;
        for i in 0..self.subnets.len() {
            let scaled = ops.mul(input, &ops.broadcast_rows(&self.scales[i], rows));
            let term = ops.matmul(&self.subnets[i].forward(ops, &scaled), &self.combination[i]);
            acc = Some(match acc {
                None => term,
                Some(a) => ops.add(&a, &term),
            });
        }
        ops.add(&acc.expect("validated non-empty"), &ops.broadcast_rows(&self.bias, rows))
    }

    pub fn forward_with_input_grad<O: Ops<T = T>>(&self, ops: &O, input: &T) -> (T, T) {
        let (rows, cols) = ops.shape(input);
        let mut acc: Option<(T, T)> = None;
        for i in 0..self.subnets.len() {
            let scale = ops.broadcast_rows(&self.scales[i], rows);
            let scaled = ops.mul(input, &scale);
            let (f, df) = self.subnets[i].forward_with_input_grad(ops, &scaled);
            let w = &self.combination[i];
            let term = ops.matmul(&f, w);
            let dterm = ops.mul(&ops.mul(&df, &scale), &ops.broadcast_scalar(w, rows, cols));
            acc = Some(match acc {
                None => (term, dterm),
                Some((a, da)) => (ops.add(&a, &term), ops.add(&da, &dterm)),
            });
        }
        let (u, du) = acc.expect("validated non-empty");
        (ops.add(&u, &ops.broadcast_rows(&self.bias, rows)), du)
    }
}
