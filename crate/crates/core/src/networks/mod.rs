//! Sine-activated fully connected networks `u_θ(t, x)` and the multiscale
//! ensemble, evaluated batched over rows of `(t, x₁, …, x_d)`.

mod mlp;
mod mscale;

pub use mlp::{glorot_bound, BoundMlp, MlpConfig, MlpParams};
pub use mscale::{BoundMscale, MscaleConfig, MscaleParams};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::autodiff::{Eager, Matrix, Ops, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid network configuration: {0}")]
    Config(&'static str),
    #[error("parameter shape error: {0}")]
    Shape(&'static str),
    #[error("input has {got} columns, network expects {expected}")]
    Input { expected: usize, got: usize },
    #[error("unknown network preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Sine,
    Tanh,
}

impl Activation {
    pub fn apply<O: Ops>(self, ops: &O, x: &O::T) -> O::T {
        match self {
            Activation::Sine => ops.sin(x),
            Activation::Tanh => ops.tanh(x),
        }
    }

    /// Derivative at pre-activation `pre`, given `act = apply(pre)`.
    pub fn derivative<O: Ops>(self, ops: &O, pre: &O::T, act: &O::T) -> O::T {
        match self {
            Activation::Sine => ops.cos(pre),
            Activation::Tanh => {
                let (r, c) = ops.shape(act);
                ops.sub(&ops.filled(r, c, 1.0), &ops.square(act))
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sine => "sine",
            Activation::Tanh => "tanh",
        }
    }
}

impl FromStr for Activation {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sine" | "sin" => Ok(Activation::Sine),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(NetworkError::Config("activation must be sine or tanh")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkConfig {
    Mlp(MlpConfig),
    Mscale(MscaleConfig),
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        match self {
            NetworkConfig::Mlp(c) => {
                c.validate()?;
                if c.input_dim < 2 || c.output_dim != 1 {
                    return Err(NetworkError::Config("u(t, x) needs input d+1 >= 2 and scalar output"));
                }
                Ok(())
            }
            NetworkConfig::Mscale(c) => {
                c.validate()?;
                if c.subnet.input_dim < 2 {
                    return Err(NetworkError::Config("u(t, x) needs input d+1 >= 2"));
                }
                Ok(())
            }
        }
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        self.input_dim() - 1
    }

    pub fn input_dim(&self) -> usize {
        match self {
            NetworkConfig::Mlp(c) => c.input_dim,
            NetworkConfig::Mscale(c) => c.subnet.input_dim,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            NetworkConfig::Mlp(c) => c.parameter_count(),
            NetworkConfig::Mscale(c) => c.parameter_count(),
        }
    }

    pub fn init(&self, seed: u64) -> Result<NetworkParams, NetworkError> {
        self.validate()?;
        Ok(match self {
            NetworkConfig::Mlp(c) => NetworkParams::Mlp(MlpParams::init(*c, seed)?),
            NetworkConfig::Mscale(c) => NetworkParams::Mscale(MscaleParams::init(c.clone(), seed)?),
        })
    }
}

/// Named architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetPreset {
    /// 5 hidden layers of 256.
    PaperFc,
    /// 4 subnetworks of 5 x 64, time scales 1, 3, 9, 27.
    PaperMs4,
    /// 4 hidden layers of 64.
    DeskFc,
    /// 4 subnetworks of 4 x 32, time scales 1, 3, 9, 27.
    DeskMs4,
}

pub const MSCALE_TIME_SCALES: [f64; 4] = [1.0, 3.0, 9.0, 27.0];

impl NetPreset {
    pub const ALL: [NetPreset; 4] = [
        NetPreset::PaperFc,
        NetPreset::PaperMs4,
        NetPreset::DeskFc,
        NetPreset::DeskMs4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetPreset::PaperFc => "paper-fc",
            NetPreset::PaperMs4 => "paper-ms4",
            NetPreset::DeskFc => "desk-fc",
            NetPreset::DeskMs4 => "desk-ms4",
        }
    }

    pub fn config(self, dim: usize) -> NetworkConfig {
        let (layers, width, multiscale) = match self {
            NetPreset::PaperFc => (5, 256, false),
            NetPreset::PaperMs4 => (5, 64, true),
            NetPreset::DeskFc => (4, 64, false),
            NetPreset::DeskMs4 => (4, 32, true),
        };
        let base = MlpConfig::scalar_field(dim, layers, width);
        if multiscale {
            NetworkConfig::Mscale(MscaleConfig::time_scaled(base, &MSCALE_TIME_SCALES))
        } else {
            NetworkConfig::Mlp(base)
        }
    }
}

impl FromStr for NetPreset {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NetPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| NetworkError::UnknownPreset(s.into()))
    }
}

impl fmt::Display for NetPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trainable parameters of `u_θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkParams {
    Mlp(MlpParams),
    Mscale(MscaleParams),
}

impl NetworkParams {
    pub fn config(&self) -> NetworkConfig {
        match self {
            NetworkParams::Mlp(p) => NetworkConfig::Mlp(p.config),
            NetworkParams::Mscale(p) => NetworkConfig::Mscale(p.config.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        self.config().dim()
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        match self {
            NetworkParams::Mlp(p) => p.tensors(),
            NetworkParams::Mscale(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            NetworkParams::Mlp(p) => p.tensors_mut(),
            NetworkParams::Mscale(p) => p.tensors_mut(),
        }
    }

    pub fn from_tensors(config: NetworkConfig, tensors: Vec<Matrix>) -> Result<Self, NetworkError> {
        config.validate()?;
        Ok(match config {
            NetworkConfig::Mlp(c) => NetworkParams::Mlp(MlpParams::from_tensors(c, tensors)?),
            NetworkConfig::Mscale(c) => NetworkParams::Mscale(MscaleParams::from_tensors(c, tensors)?),
        })
    }

    pub fn bind<O: Ops>(&self, ops: &O, make: impl FnMut(Matrix) -> O::T) -> BoundNet<O::T> {
        match self {
            NetworkParams::Mlp(p) => BoundNet::Mlp(p.bind(ops, make)),
            NetworkParams::Mscale(p) => BoundNet::Mscale(p.bind(ops, make)),
        }
    }

    /// Registers every tensor as a tape leaf. The leaves are returned in
    /// canonical [`tensors`](Self::tensors) order.
    pub fn bind_leaves(&self, tape: &Tape) -> (TapeNet, Vec<Var>) {
        let net = self.bind(tape, |m| tape.leaf(m));
        let leaves = net.tensors();
        (TapeNet { net }, leaves)
    }

    /// Constant binding for evaluation without a tape.
    pub fn eager(&self) -> EagerNet {
        EagerNet {
            dim: self.dim(),
            net: self.bind(&Eager, |m| m),
        }
    }

    /// `u_θ(t, x)` at a single point.
    pub fn eval_point(&self, t: f64, x: &[f64]) -> Result<f64, NetworkError> {
        let (u, _) = self.eval_point_with_grad(t, x)?;
        Ok(u)
    }

    /// `(u_θ(t, x), ∇ₓu_θ(t, x))` at a single point.
    pub fn eval_point_with_grad(&self, t: f64, x: &[f64]) -> Result<(f64, Vec<f64>), NetworkError> {
        let d = self.dim();
        if x.len() != d {
            return Err(NetworkError::Input {
                expected: d + 1,
                got: x.len() + 1,
            });
        }
        let (u, z) = self
            .eager()
            .value_and_grad(&Eager, t, &Matrix::row_vector(x.to_vec()));
        Ok((u.data()[0], z.into_data()))
    }
}

/// Network tensors bound to an [`Ops`] backend.
#[derive(Debug, Clone)]
pub enum BoundNet<T> {
    Mlp(BoundMlp<T>),
    Mscale(BoundMscale<T>),
}

impl<T: Clone> BoundNet<T> {
    pub fn tensors(&self) -> Vec<T> {
        match self {
            BoundNet::Mlp(n) => n.tensors(),
            BoundNet::Mscale(n) => n.tensors(),
        }
    }

    /// `m x 1` outputs for `m x (d+1)` inputs.
    pub fn forward<O: Ops<T = T>>(&self, ops: &O, input: &T) -> T {
        match self {
            BoundNet::Mlp(n) => n.forward(ops, input),
            BoundNet::Mscale(n) => n.forward(ops, input),
        }
    }

    /// Outputs and their gradient with respect to the full input row,
    /// computed by explicit backpropagation.
    pub fn forward_with_input_grad<O: Ops<T = T>>(&self, ops: &O, input: &T) -> (T, T) {
        match self {
            BoundNet::Mlp(n) => n.forward_with_input_grad(ops, input),
            BoundNet::Mscale(n) => n.forward_with_input_grad(ops, input),
        }
    }
}

/// Prepends the time column `t` to states `x`.
pub fn time_input<O: Ops>(ops: &O, t: f64, x: &O::T) -> O::T {
    let rows = ops.shape(x).0;
    ops.concat_cols(&ops.filled(rows, 1, t), x)
}

/// A value function `u(t, x)` with spatial gradient, evaluated on batches.
pub trait ValueModel<O: Ops> {
    /// `u` (`m x 1`) and `∇ₓu` (`m x d`) at time `t` for states `x` (`m x d`).
    fn value_and_grad(&self, ops: &O, t: f64, x: &O::T) -> (O::T, O::T);

    fn value(&self, ops: &O, t: f64, x: &O::T) -> O::T {
        self.value_and_grad(ops, t, x).0
    }
}

/// Network with parameters registered as leaves on a tape. The spatial
/// gradient is recorded by the tape's own reverse sweep, so it stays
/// differentiable in the parameters.
pub struct TapeNet {
    net: BoundNet<Var>,
}

impl TapeNet {
    pub fn bound(&self) -> &BoundNet<Var> {
        &self.net
    }
}

impl ValueModel<Tape> for TapeNet {
    fn value_and_grad(&self, tape: &Tape, t: f64, x: &Var) -> (Var, Var) {
        // A state that does not depend on any leaf gets a fresh leaf so
        // the input gradient has something to attach to.
        let xin = if tape.is_live(*x) {
            *x
        } else {
            tape.leaf(tape.value(*x))
        };
        let u = self.net.forward(tape, &time_input(tape, t, &xin));
        let z = tape
            .grad(tape.sum_all(&u), &[xin])
            .expect("network output is differentiable")[0];
        (u, z)
    }

    fn value(&self, tape: &Tape, t: f64, x: &Var) -> Var {
        self.net.forward(tape, &time_input(tape, t, x))
    }
}

/// Network bound to plain matrices.
#[derive(Debug, Clone)]
pub struct EagerNet {
    dim: usize,
    net: BoundNet<Matrix>,
}

impl EagerNet {
    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl ValueModel<Eager> for EagerNet {
    fn value_and_grad(&self, ops: &Eager, t: f64, x: &Matrix) -> (Matrix, Matrix) {
        let (u, g) = self.net.forward_with_input_grad(ops, &time_input(ops, t, x));
        (u, g.slice_cols(1, self.dim))
    }

    fn value(&self, ops: &Eager, t: f64, x: &Matrix) -> Matrix {
        self.net.forward(ops, &time_input(ops, t, x))
    }
}

/// Zero-parameter network of the given configuration.
pub fn zero_params(config: &NetworkConfig) -> Result<NetworkParams, NetworkError> {
    config.validate()?;
    let mut p = config.init(0)?;
    for m in p.tensors_mut() {
        m.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(p)
}
