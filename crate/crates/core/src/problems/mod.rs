//! FBSDE problem definitions.
//!
//! A problem supplies the forward drift `μ`, diffusion `σ`, backward
//! driver `φ`, terminal data `g`, `∇g`, and optionally a closed-form
//! solution. Coefficients are written against [`Ops`] so the same code runs
//! eagerly and on a tape; all batched arguments are row-per-path.

mod bsb;
mod toy;

pub use bsb::{alternating_x0, Bsb, BsbParams, OscBsb, OscBsbParams};
pub use toy::Toy;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::autodiff::{Matrix, Ops};
use crate::networks::ValueModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("invalid problem parameter: {0}")]
    Param(&'static str),
    #[error("unknown problem preset `{0}`")]
    UnknownPreset(String),
}

/// Pointwise diffusion matrix `σ(t, x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion {
    /// Diagonal entries of a diagonal `σ`.
    Diagonal(Vec<f64>),
    Full(Matrix),
}

impl Diffusion {
    pub fn to_matrix(&self) -> Matrix {
        match self {
            Diffusion::Diagonal(v) => {
                Matrix::from_fn(v.len(), v.len(), |r, c| if r == c { v[r] } else { 0.0 })
            }
            Diffusion::Full(m) => m.clone(),
        }
    }
}

pub trait Fbsde {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    /// Anchor initial state `x₀`.
    fn x0(&self) -> &[f64];
    /// `μ` and `σ` ignore `y` and `z`.
    fn is_decoupled(&self) -> bool;

    /// `false` when `μ ≡ 0`, letting steppers skip the drift term.
    fn has_drift(&self) -> bool {
        true
    }

    /// `μ(t, X, Y, Z)`, `m x d`.
    fn drift<O: Ops>(&self, ops: &O, t: f64, x: &O::T, y: &O::T, z: &O::T) -> O::T;

    /// Rows of `σ(t, X, Y) ΔW`, `m x d`. `Zᵀσ ΔW` is then the row-wise
    /// inner product with `Z`.
    fn diffuse<O: Ops>(&self, ops: &O, t: f64, x: &O::T, y: &O::T, dw: &O::T) -> O::T;

    /// `φ(t, X, Y, Z)`, `m x 1`.
    fn driver<O: Ops>(&self, ops: &O, t: f64, x: &O::T, y: &O::T, z: &O::T) -> O::T;

    /// `g(X)`, `m x 1`.
    fn terminal<O: Ops>(&self, ops: &O, x: &O::T) -> O::T;

    /// `∇g(X)`, `m x d`.
    fn terminal_grad<O: Ops>(&self, ops: &O, x: &O::T) -> O::T;

    /// Pointwise `σ(t, x, y)`.
    fn sigma(&self, t: f64, x: &[f64], y: f64) -> Diffusion;

    /// Closed-form `(u, ∇u)` at `(t, X)`, when known.
    fn exact<O: Ops>(&self, _ops: &O, _t: f64, _x: &O::T) -> Option<(O::T, O::T)> {
        None
    }

    fn has_exact(&self) -> bool {
        false
    }
}

/// Closed-form solution of a problem viewed as a value model.
pub struct Exact<'a, P>(pub &'a P);

impl<O: Ops, P: Fbsde> ValueModel<O> for Exact<'_, P> {
    fn value_and_grad(&self, ops: &O, t: f64, x: &O::T) -> (O::T, O::T) {
        self.0
            .exact(ops, t, x)
            .expect("problem has no closed-form solution")
    }
}

/// `(Σ xᵢ, Σ xᵢ², Σ xᵢ³)`.
pub fn power_sums(x: &[f64]) -> (f64, f64, f64) {
    x.iter().fold((0.0, 0.0, 0.0), |(s1, s2, s3), &v| {
        (s1 + v, s2 + v * v, s3 + v * v * v)
    })
}

/// Named problems selectable from configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Bsb(Bsb),
    OscBsb(OscBsb),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemPreset {
    Bsb,
    BsbOsc,
}

impl ProblemPreset {
    pub fn name(self) -> &'static str {
        match self {
            ProblemPreset::Bsb => "bsb",
            ProblemPreset::BsbOsc => "bsb-osc",
        }
    }
}

impl FromStr for ProblemPreset {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bsb" => Ok(ProblemPreset::Bsb),
            "bsb-osc" => Ok(ProblemPreset::BsbOsc),
            _ => Err(ProblemError::UnknownPreset(s.into())),
        }
    }
}

impl fmt::Display for ProblemPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! dispatch {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            Problem::Bsb($p) => $e,
            Problem::OscBsb($p) => $e,
        }
    };
}

impl Fbsde for Problem {
    fn name(&self) -> &'static str {
        dispatch!(self, p => p.name())
    }
    fn dim(&self) -> usize {
        dispatch!(self, p => p.dim())
    }
    fn horizon(&self) -> f64 {
        dispatch!(self, p => p.horizon())
    }
    fn x0(&self) -> &[f64] {
        dispatch!(self, p => p.x0())
    }
    fn is_decoupled(&self) -> bool {
        dispatch!(self, p => p.is_decoupled())
    }
    fn has_drift(&self) -> bool {
        dispatch!(self, p => p.has_drift())
    }
    fn drift<O: Ops>(&self, ops: &O, t: f64, x: &O::T, y: &O::T, z: &O::T) -> O::T {
        dispatch!(self, p => p.drift(ops, t, x, y, z))
    }
    fn diffuse<O: Ops>(&self, ops: &O, t: f64, x: &O::T, y: &O::T, dw: &O::T) -> O::T {
        dispatch!(self, p => p.diffuse(ops, t, x, y, dw))
    }
    fn driver<O: Ops>(&self, ops: &O, t: f64, x: &O::T, y: &O::T, z: &O::T) -> O::T {
        dispatch!(self, p => p.driver(ops, t, x, y, z))
    }
    fn terminal<O: Ops>(&self, ops: &O, x: &O::T) -> O::T {
        dispatch!(self, p => p.terminal(ops, x))
    }
    fn terminal_grad<O: Ops>(&self, ops: &O, x: &O::T) -> O::T {
        dispatch!(self, p => p.terminal_grad(ops, x))
    }
    fn sigma(&self, t: f64, x: &[f64], y: f64) -> Diffusion {
        dispatch!(self, p => p.sigma(t, x, y))
    }
    fn exact<O: Ops>(&self, ops: &O, t: f64, x: &O::T) -> Option<(O::T, O::T)> {
        dispatch!(self, p => p.exact(ops, t, x))
    }
    fn has_exact(&self) -> bool {
        dispatch!(self, p => p.has_exact())
    }
}

#[cfg(test)]
mod tests;
