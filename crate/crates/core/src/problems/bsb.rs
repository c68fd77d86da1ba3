use alloc::vec::Vec;

use super::{Diffusion, Fbsde, ProblemError};
use crate::autodiff::Ops;
use crate::math;

/// Black–Scholes–Barenblatt coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BsbParams {
    pub r: f64,
    pub sigma: f64,
    pub dim: usize,
    pub horizon: f64,
    pub x0: Vec<f64>,
}

/// `(1, 0.5, 1, 0.5, …)` of length `dim`.
pub fn alternating_x0(dim: usize) -> Vec<f64> {
    (0..dim).map(|i| if i % 2 == 0 { 1.0 } else { 0.5 }).collect()
}

impl BsbParams {
    /// `d = 100`, `T = 1`, `σ = 0.4`, `r = 0.05`.
    pub fn full_scale() -> Self {
        Self::with_dim(100)
    }

    pub fn with_dim(dim: usize) -> Self {
        Self {
            r: 0.05,
            sigma: 0.4,
            dim,
            horizon: 1.0,
            x0: alternating_x0(dim),
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(ProblemError::Param("r must be finite and >= 0"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ProblemError::Param("sigma must be finite and > 0"));
        }
        if self.dim == 0 {
            return Err(ProblemError::Param("dimension must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ProblemError::Param("horizon must be finite and > 0"));
        }
        if self.x0.len() != self.dim || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::Param("x0 must have `dim` finite entries"));
        }
        Ok(())
    }

    /// `e^{(r+σ²)(T−t)}`.
    pub fn growth(&self, t: f64) -> f64 {
        math::exp((self.r + self.sigma * self.sigma) * (self.horizon - t))
    }
}

/// `∂ₜu + ½ Tr[σ² diag(xxᵀ) ∇∇u] = r(u − ∇u·x)`, `u(T, x) = ‖x‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bsb {
    pub params: BsbParams,
}

impl Bsb {
    pub fn new(params: BsbParams) -> Result<Self, ProblemError> {
        params.validate()?;
        Ok(Self { params })
    }
}

fn zeros_like<O: Ops>(ops: &O, x: &O::T) -> O::T {
    let (r, c) = ops.shape(x);
    ops.filled(r, c, 0.0)
}

fn squared_norm<O: Ops>(ops: &O, x: &O::T) -> O::T {
    ops.sum_cols(&ops.square(x))
}

fn bsb_driver<O: Ops>(ops: &O, r: f64, x: &O::T, y: &O::T, z: &O::T) -> O::T {
    ops.scale(&ops.sub(y, &ops.dot_rows(z, x)), r)
}

impl Fbsde for Bsb {
    fn name(&self) -> &'static str {
        "bsb"
    }

    fn dim(&self) -> usize {
        self.params.dim
    }

    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn x0(&self) -> &[f64] {
        &self.params.x0
    }

    fn is_decoupled(&self) -> bool {
        true
    }

    fn has_drift(&self) -> bool {
        false
    }

    fn drift<O: Ops>(&self, ops: &O, _t: f64, x: &O::T, _y: &O::T, _z: &O::T) -> O::T {
        zeros_like(ops, x)
    }

    fn diffuse<O: Ops>(&self, ops: &O, _t: f64, x: &O::T, _y: &O::T, dw: &O::T) -> O::T {
        ops.scale(&ops.mul(x, dw), self.params.sigma)
    }

    fn driver<O: Ops>(&self, ops: &O, _t: f64, x: &O::T, y: &O::T, z: &O::T) -> O::T {
        bsb_driver(ops, self.params.r, x, y, z)
    }

    fn terminal<O: Ops>(&self, ops: &O, x: &O::T) -> O::T {
        squared_norm(ops, x)
    }

    fn terminal_grad<O: Ops>(&self, ops: &O, x: &O::T) -> O::T {
        ops.scale(x, 2.0)
    }

    fn sigma(&self, _t: f64, x: &[f64], _y: f64) -> Diffusion {
        Diffusion::Diagonal(x.iter().map(|v| self.params.sigma * v).collect())
    }

    fn exact<O: Ops>(&self, ops: &O, t: f64, x: &O::T) -> Option<(O::T, O::T)> {
        let k = self.params.growth(t);
        Some((ops.scale(&squared_norm(ops, x), k), ops.scale(x, 2.0 * k)))
    }

    fn has_exact(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscBsbParams {
    pub base: BsbParams,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl OscBsbParams {
    /// `d = 100` base with `α = 0.025`, `β = 0.25`, `γ = 32`.
    pub fn full_scale() -> Self {
        Self::with_dim(100)
    }

    pub fn with_dim(dim: usize) -> Self {
        Self {
            base: BsbParams::with_dim(dim),
            alpha: 0.025,
            beta: 0.25,
            gamma: 32.0,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        self.base.validate()?;
        if ![self.alpha, self.beta, self.gamma].iter().all(|v| v.is_finite()) {
            return Err(ProblemError::Param("alpha, beta, gamma must be finite"));
        }
        Ok(())
    }
}

/// BSB with the time-oscillating factor `1 + α sin(βS₁ − γt)`, where
/// `Sⱼ = Σᵢ xᵢʲ`, and the source term that keeps the closed form exact.
#[derive(Debug, Clone, PartialEq)]
pub struct OscBsb {
    pub params: OscBsbParams,
}

impl OscBsb {
    pub fn new(params: OscBsbParams) -> Result<Self, ProblemError> {
        params.validate()?;
        Ok(Self { params })
    }

    /// Phase column `βS₁ − γt`.
    fn phase<O: Ops>(&self, ops: &O, t: f64, s1: &O::T) -> O::T {
        ops.add_scalar(&ops.scale(s1, self.params.beta), -self.params.gamma * t)
    }

    /// `(‖x‖² (1 + α sin θ), ∇ of the same)` at phase time `t`.
    fn modulated<O: Ops>(&self, ops: &O, t: f64, x: &O::T) -> (O::T, O::T) {
        let OscBsbParams { alpha, beta, .. } = self.params;
        let d = ops.shape(x).1;
        let norm2 = squared_norm(ops, x);
        let theta = self.phase(ops, t, &ops.sum_cols(x));
        let factor = ops.add_scalar(&ops.scale(&ops.sin(&theta), alpha), 1.0);
        let value = ops.mul(&norm2, &factor);
        let radial = ops.scale(&ops.mul_col(x, &factor), 2.0);
        let along_ones = ops.scale(&ops.mul(&norm2, &ops.cos(&theta)), alpha * beta);
        let grad = ops.add(&radial, &ops.broadcast_cols(&along_ones, d));
        (value, grad)
    }

    /// Pointwise `P(t, x)`.
    pub fn source_p(&self, t: f64, x: &[f64]) -> f64 {
        let OscBsbParams { alpha: _, beta, gamma, ref base } = self.params;
        let (r, s) = (base.r, base.sigma);
        let (s1, s2, s3) = super::power_sums(x);
        let theta = beta * s1 - gamma * t;
        (r * beta * s1 * s2 - gamma * s2 + 2.0 * s * s * beta * s3) * math::cos(theta)
            - 0.5 * s * s * beta * beta * s2 * s2 * math::sin(theta)
    }

    fn source_p_batched<O: Ops>(&self, ops: &O, t: f64, x: &O::T) -> O::T {
        let OscBsbParams { beta, gamma, ref base, .. } = self.params;
        let (r, s) = (base.r, base.sigma);
        let sq = ops.square(x);
        let s1 = ops.sum_cols(x);
        let s2 = ops.sum_cols(&sq);
        let s3 = ops.sum_cols(&ops.mul(&sq, x));
        let theta = self.phase(ops, t, &s1);
        let lead = ops.add(
            &ops.sub(&ops.scale(&ops.mul(&s1, &s2), r * beta), &ops.scale(&s2, gamma)),
            &ops.scale(&s3, 2.0 * s * s * beta),
        );
        let tail = ops.scale(&ops.square(&s2), 0.5 * s * s * beta * beta);
        ops.sub(&ops.mul(&lead, &ops.cos(&theta)), &ops.mul(&tail, &ops.sin(&theta)))
    }
}

impl Fbsde for OscBsb {
    fn name(&self) -> &'static str {
        "bsb-osc"
    }

    fn dim(&self) -> usize {
        self.params.base.dim
    }

    fn horizon(&self) -> f64 {
        self.params.base.horizon
    }

    fn x0(&self) -> &[f64] {
        &self.params.base.x0
    }

    fn is_decoupled(&self) -> bool {
        true
    }

    fn has_drift(&self) -> bool {
        false
    }

    fn drift<O: Ops>(&self, ops: &O, _t: f64, x: &O::T, _y: &O::T, _z: &O::T) -> O::T {
        zeros_like(ops, x)
    }

    fn diffuse<O: Ops>(&self, ops: &O, _t: f64, x: &O::T, _y: &O::T, dw: &O::T) -> O::T {
        ops.scale(&ops.mul(x, dw), self.params.base.sigma)
    }

    fn driver<O: Ops>(&self, ops: &O, t: f64, x: &O::T, y: &O::T, z: &O::T) -> O::T {
        let base = bsb_driver(ops, self.params.base.r, x, y, z);
        if self.params.alpha == 0.0 {
            return base;
        }
        let k = self.params.base.growth(t);
        let source = ops.scale(&self.source_p_batched(ops, t, x), self.params.alpha * k);
        ops.add(&base, &source)
    }

    fn terminal<O: Ops>(&self, ops: &O, x: &O::T) -> O::T {
        if self.params.alpha == 0.0 {
            return squared_norm(ops, x);
        }
        self.modulated(ops, self.params.base.horizon, x).0
    }

    fn terminal_grad<O: Ops>(&self, ops: &O, x: &O::T) -> O::T {
        if self.params.alpha == 0.0 {
            return ops.scale(x, 2.0);
        }
        self.modulated(ops, self.params.base.horizon, x).1
    }

    fn sigma(&self, _t: f64, x: &[f64], _y: f64) -> Diffusion {
        Diffusion::Diagonal(x.iter().map(|v| self.params.base.sigma * v).collect())
    }

    fn exact<O: Ops>(&self, ops: &O, t: f64, x: &O::T) -> Option<(O::T, O::T)> {
        let k = self.params.base.growth(t);
        if self.params.alpha == 0.0 {
            return Some((ops.scale(&squared_norm(ops, x), k), ops.scale(x, 2.0 * k)));
        }
        let (u, g) = self.modulated(ops, t, x);
        Some((ops.scale(&u, k), ops.scale(&g, k)))
    }

    fn has_exact(&self) -> bool {
        true
    }
}
