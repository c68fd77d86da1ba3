//! Brownian increments and Euler–Maruyama stepping.

mod noise;

pub use noise::{
    bridge_path, coarsen, sample_increments, sample_increments_range, uniform01, Domain, Gaussian,
    NoiseKey,
};

use alloc::vec::Vec;

use crate::autodiff::{Eager, Matrix, Ops};
use crate::networks::ValueModel;
use crate::problems::Fbsde;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("time grid needs at least one step and a positive finite horizon")]
    Grid,
    #[error("cannot coarsen {steps} steps by a factor of {factor}")]
    Coarsen { steps: usize, factor: usize },
    #[error("non-finite {what} on path {path} at station {station}")]
    NonFinite {
        what: &'static str,
        path: usize,
        station: usize,
    },
    #[error("forward-only simulation needs a decoupled problem")]
    Coupled,
    #[error("initial states are {got:?}, expected m x {dim}")]
    Shape { got: (usize, usize), dim: usize },
}

/// Uniform partition of `[0, T]` into `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub horizon: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, horizon: f64) -> Result<Self, SimError> {
        if n_steps == 0 || !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SimError::Grid);
        }
        Ok(Self { n_steps, horizon })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// `t_n = n T / N`; exact at both ends.
    pub fn t(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.horizon
        } else {
            self.horizon * n as f64 / self.n_steps as f64
        }
    }

    pub fn stations(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| self.t(n)).collect()
    }
}

/// `X_{n+1} = X_n + μ Δt + σ ΔW_n`.
#[allow(clippy::too_many_arguments)]
pub fn euler_x_step<P: Fbsde, O: Ops>(
    problem: &P,
    ops: &O,
    t: f64,
    x: &O::T,
    y: &O::T,
    z: &O::T,
    dw: &O::T,
    dt: f64,
) -> O::T {
    let noise = problem.diffuse(ops, t, x, y, dw);
    if !problem.has_drift() {
        return ops.add(x, &noise);
    }
    let drift = ops.scale(&problem.drift(ops, t, x, y, z), dt);
    ops.add(&ops.add(x, &drift), &noise)
}

/// `Y_{n+1} = Y_n + φ Δt + Zᵀ σ ΔW_n`.
#[allow(clippy::too_many_arguments)]
pub fn euler_y_step<P: Fbsde, O: Ops>(
    problem: &P,
    ops: &O,
    t: f64,
    x: &O::T,
    y: &O::T,
    z: &O::T,
    dw: &O::T,
    dt: f64,
) -> O::T {
    let noise = problem.diffuse(ops, t, x, y, dw);
    euler_y_step_with_noise(problem, ops, t, x, y, z, &noise, dt)
}

/// [`euler_y_step`] with a precomputed `σ ΔW_n`.
#[allow(clippy::too_many_arguments)]
pub fn euler_y_step_with_noise<P: Fbsde, O: Ops>(
    problem: &P,
    ops: &O,
    t: f64,
    x: &O::T,
    y: &O::T,
    z: &O::T,
    noise: &O::T,
    dt: f64,
) -> O::T {
    let phi = ops.scale(&problem.driver(ops, t, x, y, z), dt);
    ops.add(&ops.add(y, &phi), &ops.dot_rows(z, noise))
}

/// Row and station of the first non-finite entry, as an error.
pub fn ensure_finite(m: &Matrix, what: &'static str, station: usize) -> Result<(), SimError> {
    match m.first_non_finite() {
        None => Ok(()),
        Some((path, _)) => Err(SimError::NonFinite {
            what,
            path,
            station,
        }),
    }
}

/// Forward states `X_0..X_N` of a decoupled problem from the rows of `x0`.
pub fn simulate_forward_only<P: Fbsde>(
    problem: &P,
    x0: &Matrix,
    grid: &TimeGrid,
    dw: &[Matrix],
) -> Result<Vec<Matrix>, SimError> {
    if !problem.is_decoupled() {
        return Err(SimError::Coupled);
    }
    let d = problem.dim();
    if x0.cols() != d {
        return Err(SimError::Shape {
            got: x0.shape(),
            dim: d,
        });
    }
    let m = x0.rows();
    let y = Matrix::zeros(m, 1);
    let z = Matrix::zeros(m, d);
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_steps + 1);
    states.push(x0.clone());
    for n in 0..grid.n_steps {
        let next = euler_x_step(problem, &Eager, grid.t(n), &states[n], &y, &z, &dw[n], dt);
        ensure_finite(&next, "state", n + 1)?;
        states.push(next);
    }
    Ok(states)
}

/// `m` copies of the anchor state.
pub fn anchored_x0<P: Fbsde>(problem: &P, m: usize) -> Matrix {
    Matrix::row_vector(problem.x0().to_vec()).broadcast_rows(m)
}

/// Simulated trajectories with values and gradients read from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub grid: TimeGrid,
    /// `N` increments, `m x d` each.
    pub dw: Vec<Matrix>,
    /// `N + 1` states, `m x d` each.
    pub x: Vec<Matrix>,
    /// `N + 1` values, `m x 1` each.
    pub y: Vec<Matrix>,
    /// `N + 1` gradients, `m x d` each.
    pub z: Vec<Matrix>,
}

impl PathBatch {
    pub fn paths(&self) -> usize {
        self.x[0].rows()
    }
}

/// Forward Euler paths with `Y_n = u(t_n, X_n)`, `Z_n = ∇u(t_n, X_n)`.
pub fn trajectories<P: Fbsde, V: ValueModel<Eager>>(
    problem: &P,
    model: &V,
    x0: &Matrix,
    grid: &TimeGrid,
    dw: Vec<Matrix>,
) -> Result<PathBatch, SimError> {
    let x = simulate_forward_only(problem, x0, grid, &dw)?;
    let (mut ys, mut zs) = (Vec::with_capacity(x.len()), Vec::with_capacity(x.len()));
    for (n, xn) in x.iter().enumerate() {
        let (y, z) = model.value_and_grad(&Eager, grid.t(n), xn);
        ensure_finite(&y, "value", n)?;
        ys.push(y);
        zs.push(z);
    }
    Ok(PathBatch {
        grid: *grid,
        dw,
        x,
        y: ys,
        z: zs,
    })
}

/// Mean of `|Y_N − g(X_N)|` for the Euler `Y` recursion started at the
/// exact `u(0, x₀)` and driven by the exact `∇u` along the simulated
/// states.
pub fn exact_driven_terminal_error<P: Fbsde>(
    problem: &P,
    grid: &TimeGrid,
    dw: &[Matrix],
) -> Result<f64, SimError> {
    let m = dw[0].rows();
    let x0 = anchored_x0(problem, m);
    let states = simulate_forward_only(problem, &x0, grid, dw)?;
    let dt = grid.dt();
    let exact = |t: f64, x: &Matrix| {
        problem
            .exact(&Eager, t, x)
            .expect("strong-error harness needs a closed-form solution")
    };
    let mut y = exact(0.0, &x0).0;
    for n in 0..grid.n_steps {
        let z = exact(grid.t(n), &states[n]).1;
        y = euler_y_step(problem, &Eager, grid.t(n), &states[n], &y, &z, &dw[n], dt);
        ensure_finite(&y, "value", n + 1)?;
    }
    let g = problem.terminal(&Eager, &states[grid.n_steps]);
    let total: f64 = y.data().iter().zip(g.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / m as f64)
}
