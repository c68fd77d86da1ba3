use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use super::rollout::{advance, check_shapes, constants, diagnose, euler_value};
use super::{Batch, LossTerms, SchemeConfig, SchemeError};
use crate::autodiff::{Matrix, Ops};
use crate::networks::{Activation, BoundMlp, MlpConfig, MlpParams, NetworkError};
use crate::problems::Fbsde;

/// Shape of the per-step gradient networks `x ↦ Z_n`, `n = 1..N−1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeepBsdeConfig {
    pub dim: usize,
    pub n_steps: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
}

impl DeepBsdeConfig {
    pub fn subnet(&self) -> MlpConfig {
        MlpConfig {
            input_dim: self.dim,
            output_dim: self.dim,
            hidden_layers: self.hidden_layers,
            hidden_width: self.hidden_width,
            activation: self.activation,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.n_steps == 0 {
            return Err(NetworkError::Config("at least one time step"));
        }
        self.subnet().validate()
    }

    pub fn parameter_count(&self) -> usize {
        1 + self.dim + (self.n_steps - 1) * self.subnet().parameter_count()
    }
}

/// Trainable `Y_0` (`1 x 1`), `Z_0` (`1 x d`) and one subnet per interior
/// station.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepBsdeParams {
    pub config: DeepBsdeConfig,
    pub y0: Matrix,
    pub z0: Matrix,
    pub subnets: Vec<MlpParams>,
}

impl DeepBsdeParams {
    /// Glorot subnets from `seed`, `Z_0 = 0` and `Y_0 = y0_guess`.
    pub fn init(config: DeepBsdeConfig, seed: u64, y0_guess: f64) -> Result<Self, NetworkError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subnets = (1..config.n_steps)
            .map(|_| MlpParams::init_with(config.subnet(), &mut rng))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            config,
            y0: Matrix::scalar(y0_guess),
            z0: Matrix::zeros(1, config.dim),
            subnets,
        })
    }

    /// `Y_0`, `Z_0`, then each subnet's tensors.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = alloc::vec![&self.y0, &self.z0];
        out.extend(self.subnets.iter().flat_map(|s| s.tensors()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = alloc::vec![&mut self.y0, &mut self.z0];
        out.extend(self.subnets.iter_mut().flat_map(|s| s.tensors_mut()));
        out
    }

    pub fn from_tensors(config: DeepBsdeConfig, tensors: Vec<Matrix>) -> Result<Self, NetworkError> {
        config.validate()?;
        let per = 2 * (config.subnet().hidden_layers + 1);
        if tensors.len() != 2 + per * (config.n_steps - 1) {
            return Err(NetworkError::Shape("tensor count"));
        }
        let mut it = tensors.into_iter();
        let (y0, z0) = match (it.next(), it.next()) {
            (Some(y0), Some(z0)) if y0.shape() == (1, 1) && z0.shape() == (1, config.dim) => (y0, z0),
            _ => return Err(NetworkError::Shape("initial value and gradient")),
        };
        let rest: Vec<Matrix> = it.collect();
        let subnets = rest
            .chunks(per)
            .map(|c| MlpParams::from_tensors(config.subnet(), c.to_vec()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            config,
            y0,
            z0,
            subnets,
        })
    }

    pub fn bind<O: Ops>(&self, ops: &O, mut make: impl FnMut(Matrix) -> O::T) -> BoundDeepBsde<O::T> {
        let y0 = make(self.y0.clone());
        let z0 = make(self.z0.clone());
        let subnets = self.subnets.iter().map(|s| s.bind(ops, &mut make)).collect();
        BoundDeepBsde { y0, z0, subnets }
    }
}

#[derive(Debug, Clone)]
pub struct BoundDeepBsde<T> {
    pub y0: T,
    pub z0: T,
    pub subnets: Vec<BoundMlp<T>>,
}

impl<T: Clone> BoundDeepBsde<T> {
    pub fn tensors(&self) -> Vec<T> {
        let mut out = alloc::vec![self.y0.clone(), self.z0.clone()];
        out.extend(self.subnets.iter().flat_map(|s| s.tensors()));
        out
    }
}

/// Mean squared terminal mismatch `|Y_N − g(X_N)|²` of the forward value
/// recursion started at the trainable `Y_0`, `Z_0`.
pub fn deep_bsde_loss<P: Fbsde, O: Ops>(
    problem: &P,
    ops: &O,
    model: &BoundDeepBsde<O::T>,
    cfg: &SchemeConfig,
    batch: &Batch,
) -> Result<LossTerms<O::T>, SchemeError> {
    check_shapes(problem, cfg, batch)?;
    if model.subnets.len() + 1 != cfg.grid.n_steps {
        return Err(SchemeError::Shape("one gradient subnet per interior station"));
    }
    let grid = &cfg.grid;
    let dt = grid.dt();
    let m = batch.x0.rows();
    let (mut x, dw) = constants(ops, batch);
    let mut y = ops.broadcast_rows(&model.y0, m);
    let mut z = ops.broadcast_rows(&model.z0, m);
    let mut watched = Vec::with_capacity(grid.n_steps);
    for n in 0..grid.n_steps {
        let t = grid.t(n);
        let noise = problem.diffuse(ops, t, &x, &y, &dw[n]);
        let x_next = advance(problem, ops, t, dt, (&x, &y, &z), &noise);
        y = euler_value(problem, ops, t, dt, (&x, &y, &z), &noise);
        watched.push((n + 1, y.clone()));
        x = x_next;
        if let Some(net) = model.subnets.get(n) {
            z = net.forward(ops, &x);
        }
    }
    let norm = 1.0 / batch.norm_paths as f64;
    let mismatch = ops.sum_all(&ops.square(&ops.sub(&y, &problem.terminal(ops, &x))));
    let terminal_value = ops.scale(&mismatch, norm);
    let zero = ops.constant(Matrix::scalar(0.0));
    let terms = LossTerms {
        pathwise: zero.clone(),
        terminal_value: terminal_value.clone(),
        terminal_grad: zero,
        total: terminal_value,
        weights: (1.0, 0.0),
    };
    if ops.to_matrix(&terms.total).is_finite() {
        Ok(terms)
    } else {
        Err(diagnose(ops, batch, grid.n_steps, &watched))
    }
}
