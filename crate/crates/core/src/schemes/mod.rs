//! Differentiable training losses: Deep BSDE and Schemes 1, 2 and 3.
//!
//! Every loss is generic over [`Ops`], so the same code evaluates plainly
//! on matrices or records onto a tape for parameter gradients. Batches may
//! be split into path chunks; each chunk normalises by the full batch size,
//! so chunk losses and gradients add up to the batch values.

mod deep_bsde;
mod rollout;

pub use deep_bsde::{deep_bsde_loss, BoundDeepBsde, DeepBsdeConfig, DeepBsdeParams};
pub use rollout::{scheme1_loss, scheme2_loss, scheme3_branch2_states, scheme3_loss};

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::autodiff::{AdError, Eager, Matrix, Ops, Tape};
use crate::networks::{NetworkConfig, NetworkError, NetworkParams, ValueModel};
use crate::problems::Fbsde;
use crate::simulate::TimeGrid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemeError {
    #[error("invalid scheme configuration: {0}")]
    Config(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("non-finite loss on path {path} at station {station}")]
    NonFinite { station: usize, path: usize },
    #[error("the {scheme} loss needs a {needs} model")]
    ModelKind {
        scheme: SchemeKind,
        needs: &'static str,
    },
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    DeepBsde,
    Scheme1,
    Scheme2,
    Scheme3,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [Self::DeepBsde, Self::Scheme1, Self::Scheme2, Self::Scheme3];

    pub fn name(self) -> &'static str {
        match self {
            Self::DeepBsde => "deep-bsde",
            Self::Scheme1 => "s1",
            Self::Scheme2 => "s2",
            Self::Scheme3 => "s3",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deep-bsde" | "deep_bsde" => Ok(Self::DeepBsde),
            "s1" => Ok(Self::Scheme1),
            "s2" => Ok(Self::Scheme2),
            "s3" => Ok(Self::Scheme3),
            _ => Err(SchemeError::Config("unknown scheme")),
        }
    }
}

/// Arguments of the diffusion in Scheme 3's second-branch state update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme3Sigma {
    /// `σ(t_n, X⁽¹⁾_n, Y⁽¹⁾_n)`.
    #[default]
    AsPrinted,
    /// `σ(t_n, X⁽²⁾_n, Y⁽²⁾_n)`.
    OwnBranch,
}

impl FromStr for Scheme3Sigma {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "own-branch" => Ok(Self::OwnBranch),
            _ => Err(SchemeError::Config("scheme3 sigma is as-printed or own-branch")),
        }
    }
}

impl Scheme3Sigma {
    pub fn name(self) -> &'static str {
        match self {
            Self::AsPrinted => "as-printed",
            Self::OwnBranch => "own-branch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub grid: TimeGrid,
    pub batch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub scheme3_sigma: Scheme3Sigma,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, grid: TimeGrid, batch: usize) -> Self {
        Self {
            kind,
            grid,
            batch,
            beta1: 0.02,
            beta2: 0.02,
            scheme3_sigma: Scheme3Sigma::AsPrinted,
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        if self.batch == 0 {
            return Err(SchemeError::Config("batch must hold at least one path"));
        }
        if !(self.beta1 >= 0.0 && self.beta2 >= 0.0 && self.beta1.is_finite() && self.beta2.is_finite()) {
            return Err(SchemeError::Config("terminal penalties must be finite and non-negative"));
        }
        TimeGrid::new(self.grid.n_steps, self.grid.horizon)
            .map(|_| ())
            .map_err(|_| SchemeError::Config("invalid time grid"))
    }
}

/// Initial states and increments of a chunk of paths.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    /// `m x d`.
    pub x0: &'a Matrix,
    /// `N` increments, `m x d` each.
    pub dw: &'a [Matrix],
    /// Paths in the whole batch, the normaliser of every mean.
    pub norm_paths: usize,
    /// Index of the chunk's first path within the batch.
    pub path_offset: usize,
}

impl<'a> Batch<'a> {
    pub fn whole(x0: &'a Matrix, dw: &'a [Matrix]) -> Self {
        Self {
            x0,
            dw,
            norm_paths: x0.rows(),
            path_offset: 0,
        }
    }
}

/// Loss components on a backend. `weights` are the penalties applied to
/// the terminal terms in `total`.
#[derive(Debug, Clone)]
pub struct LossTerms<T> {
    pub pathwise: T,
    pub terminal_value: T,
    pub terminal_grad: T,
    pub total: T,
    pub weights: (f64, f64),
}

impl<T> LossTerms<T> {
    pub fn breakdown<O: Ops<T = T>>(&self, ops: &O) -> LossBreakdown {
        let v = |t: &T| ops.to_matrix(t).as_scalar().expect("loss terms are scalars");
        LossBreakdown {
            pathwise: v(&self.pathwise),
            terminal_value: v(&self.terminal_value),
            terminal_grad: v(&self.terminal_grad),
            total: v(&self.total),
            weights: self.weights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub pathwise: f64,
    pub terminal_value: f64,
    pub terminal_grad: f64,
    pub total: f64,
    pub weights: (f64, f64),
}

impl LossBreakdown {
    pub fn zero(weights: (f64, f64)) -> Self {
        Self {
            pathwise: 0.0,
            terminal_value: 0.0,
            terminal_grad: 0.0,
            total: 0.0,
            weights,
        }
    }

    /// `pathwise + β₁ terminal_value + β₂ terminal_grad`.
    pub fn weighted_sum(&self) -> f64 {
        self.pathwise + self.weights.0 * self.terminal_value + self.weights.1 * self.terminal_grad
    }

    /// Componentwise sum, used to reduce chunk losses.
    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.pathwise += other.pathwise;
        self.terminal_value += other.terminal_value;
        self.terminal_grad += other.terminal_grad;
        self.total += other.total;
    }
}

/// Trainable parameters: a value network `u_θ(t, x)` for Schemes 1 to 3,
/// or the Deep BSDE initial pair and gradient subnets.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Field(NetworkParams),
    DeepBsde(DeepBsdeParams),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Field(NetworkConfig),
    DeepBsde(DeepBsdeConfig),
}

impl ModelConfig {
    pub fn parameter_count(&self) -> usize {
        match self {
            Self::Field(c) => c.parameter_count(),
            Self::DeepBsde(c) => c.parameter_count(),
        }
    }
}

impl Model {
    pub fn config(&self) -> ModelConfig {
        match self {
            Self::Field(p) => ModelConfig::Field(p.config()),
            Self::DeepBsde(p) => ModelConfig::DeepBsde(p.config),
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        match self {
            Self::Field(p) => p.tensors(),
            Self::DeepBsde(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Self::Field(p) => p.tensors_mut(),
            Self::DeepBsde(p) => p.tensors_mut(),
        }
    }

    pub fn from_tensors(config: ModelConfig, tensors: Vec<Matrix>) -> Result<Self, NetworkError> {
        Ok(match config {
            ModelConfig::Field(c) => Self::Field(NetworkParams::from_tensors(c, tensors)?),
            ModelConfig::DeepBsde(c) => Self::DeepBsde(DeepBsdeParams::from_tensors(c, tensors)?),
        })
    }

    pub fn field(&self) -> Option<&NetworkParams> {
        match self {
            Self::Field(p) => Some(p),
            Self::DeepBsde(_) => None,
        }
    }

    /// Approximation of `u(0, x₀)`.
    pub fn y0(&self, x0: &[f64]) -> Result<f64, NetworkError> {
        match self {
            Self::Field(p) => p.eval_point(0.0, x0),
            Self::DeepBsde(p) => Ok(p.y0.data()[0]),
        }
    }

    fn check_kind(&self, kind: SchemeKind) -> Result<(), SchemeError> {
        match (self, kind) {
            (Self::DeepBsde(_), SchemeKind::DeepBsde) => Ok(()),
            (Self::Field(_), k) if k != SchemeKind::DeepBsde => Ok(()),
            (Self::Field(_), _) => Err(SchemeError::ModelKind {
                scheme: kind,
                needs: "Deep BSDE",
            }),
            (Self::DeepBsde(_), _) => Err(SchemeError::ModelKind {
                scheme: kind,
                needs: "value network",
            }),
        }
    }
}

/// Dispatches a value-network scheme.
pub fn field_loss<P, O, V>(
    problem: &P,
    ops: &O,
    model: &V,
    cfg: &SchemeConfig,
    batch: &Batch,
) -> Result<LossTerms<O::T>, SchemeError>
where
    P: Fbsde,
    O: Ops,
    V: ValueModel<O>,
{
    match cfg.kind {
        SchemeKind::Scheme1 => scheme1_loss(problem, ops, model, cfg, batch),
        SchemeKind::Scheme2 => scheme2_loss(problem, ops, model, cfg, batch),
        SchemeKind::Scheme3 => scheme3_loss(problem, ops, model, cfg, batch),
        SchemeKind::DeepBsde => Err(SchemeError::ModelKind {
            scheme: cfg.kind,
            needs: "Deep BSDE",
        }),
    }
}

/// Loss value without gradients.
pub fn loss<P: Fbsde>(
    problem: &P,
    model: &Model,
    cfg: &SchemeConfig,
    batch: &Batch,
) -> Result<LossBreakdown, SchemeError> {
    model.check_kind(cfg.kind)?;
    let ops = Eager;
    let terms = match model {
        Model::Field(p) => field_loss(problem, &ops, &p.eager(), cfg, batch)?,
        Model::DeepBsde(p) => deep_bsde_loss(problem, &ops, &p.bind(&ops, |m| m), cfg, batch)?,
    };
    Ok(terms.breakdown(&ops))
}

/// Loss value and its gradient in every parameter tensor, in
/// [`Model::tensors`] order.
pub fn loss_and_grad<P: Fbsde>(
    problem: &P,
    model: &Model,
    cfg: &SchemeConfig,
    batch: &Batch,
) -> Result<(LossBreakdown, Vec<Matrix>), SchemeError> {
    model.check_kind(cfg.kind)?;
    let tape = Tape::new();
    let (terms, leaves) = match model {
        Model::Field(p) => {
            let (net, leaves) = p.bind_leaves(&tape);
            (field_loss(problem, &tape, &net, cfg, batch)?, leaves)
        }
        Model::DeepBsde(p) => {
            let bound = p.bind(&tape, |m| tape.leaf(m));
            let leaves = bound.tensors();
            (deep_bsde_loss(problem, &tape, &bound, cfg, batch)?, leaves)
        }
    };
    let grads = tape.gradients(terms.total, &leaves)?;
    Ok((terms.breakdown(&tape), grads))
}

#[cfg(test)]
mod tests;
