use alloc::vec::Vec;

use super::{Diffusion, Fbsde};
use crate::autodiff::Ops;

/// Small synthetic problem with tunable coefficients:
/// `μ = drift`, `σ(t, x, y) = sigma (1 + coupling·y) diag(x)`,
/// `φ = rate·y`, `g = terminal_scale ‖x‖²`.
///
/// Any nonzero `coupling` makes the forward process depend on `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Toy {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub drift: f64,
    pub sigma: f64,
    pub rate: f64,
    pub terminal_scale: f64,
    pub coupling: f64,
}

impl Toy {
    /// Everything switched off: `μ = 0`, `σ = 0`, `φ = 0`, `g = 0`.
    pub fn frozen(x0: Vec<f64>) -> Self {
        Self {
            x0,
            horizon: 1.0,
            drift: 0.0,
            sigma: 0.0,
            rate: 0.0,
            terminal_scale: 0.0,
            coupling: 0.0,
        }
    }

    fn sigma_column<O: Ops>(&self, ops: &O, y: &O::T) -> Option<O::T> {
        (self.coupling != 0.0).then(|| ops.add_scalar(&ops.scale(y, self.coupling), 1.0))
    }
}

impl Fbsde for Toy {
    fn name(&self) -> &'static str {
        "toy"
    }

    fn dim(&self) -> usize {
        self.x0.len()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn x0(&self) -> &[f64] {
        &self.x0
    }

    fn is_decoupled(&self) -> bool {
        self.coupling == 0.0
    }

    fn has_drift(&self) -> bool {
        self.drift != 0.0
    }

    fn drift<O: Ops>(&self, ops: &O, _t: f64, x: &O::T, _y: &O::T, _z: &O::T) -> O::T {
        let (r, c) = ops.shape(x);
        ops.filled(r, c, self.drift)
    }

    fn diffuse<O: Ops>(&self, ops: &O, _t: f64, x: &O::T, y: &O::T, dw: &O::T) -> O::T {
        let base = ops.scale(&ops.mul(x, dw), self.sigma);
        match self.sigma_column(ops, y) {
            None => base,
            Some(col) => ops.mul_col(&base, &col),
        }
    }

    fn driver<O: Ops>(&self, ops: &O, _t: f64, _x: &O::T, y: &O::T, _z: &O::T) -> O::T {
        ops.scale(y, self.rate)
    }

    fn terminal<O: Ops>(&self, ops: &O, x: &O::T) -> O::T {
        ops.scale(&ops.sum_cols(&ops.square(x)), self.terminal_scale)
    }

    fn terminal_grad<O: Ops>(&self, ops: &O, x: &O::T) -> O::T {
        ops.scale(x, 2.0 * self.terminal_scale)
    }

    fn sigma(&self, _t: f64, x: &[f64], y: f64) -> Diffusion {
        let s = self.sigma * (1.0 + self.coupling * y);
        Diffusion::Diagonal(x.iter().map(|v| s * v).collect())
    }
}
