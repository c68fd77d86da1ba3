use alloc::vec::Vec;

use super::{Batch, LossTerms, Scheme3Sigma, SchemeConfig, SchemeError};
use crate::autodiff::{Matrix, Ops};
use crate::networks::ValueModel;
use crate::problems::Fbsde;
use crate::simulate::euler_y_step_with_noise;

/// Running sum of squared per-path mismatches, plus the per-station
/// quantities kept for non-finite diagnostics.
pub(super) struct Mismatch<T> {
    acc: Option<T>,
    pub(super) watched: Vec<(usize, T)>,
}

impl<T: Clone> Mismatch<T> {
    pub(super) fn new() -> Self {
        Self {
            acc: None,
            watched: Vec::new(),
        }
    }

    fn push<O: Ops<T = T>>(&mut self, ops: &O, a: &T, b: &T) {
        let sq = ops.square(&ops.sub(a, b));
        self.acc = Some(match self.acc.take() {
            None => sq,
            Some(prev) => ops.add(&prev, &sq),
        });
    }

    fn watch(&mut self, station: usize, v: &T) {
        self.watched.push((station, v.clone()));
    }

    /// `Σ_paths Σ_n |·|² / (M N)`.
    fn finish<O: Ops<T = T>>(self, ops: &O, norm: f64) -> (T, Vec<(usize, T)>) {
        let acc = self.acc.expect("at least one step");
        (ops.scale(&ops.sum_all(&acc), norm), self.watched)
    }
}

/// Terminal penalties `Σ |Y − g|² / M` and `Σ ‖Z − ∇g‖² / M`.
fn terminal_terms<P: Fbsde, O: Ops>(
    problem: &P,
    ops: &O,
    x: &O::T,
    y: &O::T,
    z: &O::T,
    norm: f64,
) -> (O::T, O::T) {
    let value = ops.sum_all(&ops.square(&ops.sub(y, &problem.terminal(ops, x))));
    let grad = ops.sum_all(&ops.square(&ops.sub(z, &problem.terminal_grad(ops, x))));
    (ops.scale(&value, norm), ops.scale(&grad, norm))
}

pub(super) fn check_shapes<P: Fbsde>(problem: &P, cfg: &SchemeConfig, batch: &Batch) -> Result<(), SchemeError> {
    let n = cfg.grid.n_steps;
    let (m, d) = batch.x0.shape();
    if batch.dw.len() != n {
        return Err(SchemeError::Shape("increment count differs from the number of steps"));
    }
    if d != problem.dim() || batch.dw.iter().any(|w| w.shape() != (m, d)) {
        return Err(SchemeError::Shape("batch shapes disagree with the problem dimension"));
    }
    if m == 0 || batch.norm_paths == 0 {
        return Err(SchemeError::Shape("empty batch"));
    }
    Ok(())
}

fn assemble<O: Ops>(
    ops: &O,
    cfg: &SchemeConfig,
    batch: &Batch,
    pathwise: O::T,
    terminal_value: O::T,
    terminal_grad: O::T,
    watched: Vec<(usize, O::T)>,
) -> Result<LossTerms<O::T>, SchemeError> {
    let total = ops.add(
        &ops.add(&pathwise, &ops.scale(&terminal_value, cfg.beta1)),
        &ops.scale(&terminal_grad, cfg.beta2),
    );
    let terms = LossTerms {
        pathwise,
        terminal_value,
        terminal_grad,
        total,
        weights: (cfg.beta1, cfg.beta2),
    };
    let value = ops.to_matrix(&terms.total);
    if value.is_finite() {
        return Ok(terms);
    }
    Err(diagnose(ops, batch, cfg.grid.n_steps, &watched))
}

pub(super) fn diagnose<O: Ops>(
    ops: &O,
    batch: &Batch,
    last_station: usize,
    watched: &[(usize, O::T)],
) -> SchemeError {
    for (station, v) in watched {
        if let Some((row, _)) = ops.to_matrix(v).first_non_finite() {
            return SchemeError::NonFinite {
                station: *station,
                path: batch.path_offset + row,
            };
        }
    }
    SchemeError::NonFinite {
        station: last_station,
        path: batch.path_offset,
    }
}

pub(super) fn constants<O: Ops>(ops: &O, batch: &Batch) -> (O::T, Vec<O::T>) {
    let x0 = ops.constant(batch.x0.clone());
    let dw = batch.dw.iter().map(|w| ops.constant(w.clone())).collect();
    (x0, dw)
}

/// `X + μΔt + noise`.
pub(super) fn advance<P: Fbsde, O: Ops>(
    problem: &P,
    ops: &O,
    t: f64,
    dt: f64,
    state: (&O::T, &O::T, &O::T),
    noise: &O::T,
) -> O::T {
    let (x, y, z) = state;
    if !problem.has_drift() {
        return ops.add(x, noise);
    }
    let drift = ops.scale(&problem.drift(ops, t, x, y, z), dt);
    ops.add(&ops.add(x, &drift), noise)
}

/// `Y + φΔt + Z·noise`.
pub(super) fn euler_value<P: Fbsde, O: Ops>(
    problem: &P,
    ops: &O,
    t: f64,
    dt: f64,
    state: (&O::T, &O::T, &O::T),
    noise: &O::T,
) -> O::T {
    let (x, y, z) = state;
    euler_y_step_with_noise(problem, ops, t, x, y, z, noise, dt)
}

pub fn scheme1_loss<P, O, V>(
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
    check_shapes(problem, cfg, batch)?;
    let grid = &cfg.grid;
    let dt = grid.dt();
    let (mut x, dw) = constants(ops, batch);
    let (mut y, mut z) = model.value_and_grad(ops, grid.t(0), &x);
    let mut mismatch = Mismatch::new();
    mismatch.watch(0, &y);
    for n in 0..grid.n_steps {
        let t = grid.t(n);
        let noise = problem.diffuse(ops, t, &x, &y, &dw[n]);
        let x_next = advance(problem, ops, t, dt, (&x, &y, &z), &noise);
        let reference = euler_value(problem, ops, t, dt, (&x, &y, &z), &noise);
        let (y_next, z_next) = model.value_and_grad(ops, grid.t(n + 1), &x_next);
        mismatch.push(ops, &y_next, &reference);
        mismatch.watch(n + 1, &reference);
        mismatch.watch(n + 1, &y_next);
        (x, y, z) = (x_next, y_next, z_next);
    }
    let norm = 1.0 / batch.norm_paths as f64;
    let (pathwise, watched) = mismatch.finish(ops, norm / grid.n_steps as f64);
    let (tv, tg) = terminal_terms(problem, ops, &x, &y, &z, norm);
    assemble(ops, cfg, batch, pathwise, tv, tg, watched)
}

pub fn scheme2_loss<P, O, V>(
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
    check_shapes(problem, cfg, batch)?;
    let grid = &cfg.grid;
    let dt = grid.dt();
    let (mut x, dw) = constants(ops, batch);
    let (mut y_net, mut z) = model.value_and_grad(ops, grid.t(0), &x);
    let mut y = y_net.clone();
    let mut mismatch = Mismatch::new();
    mismatch.watch(0, &y);
    for n in 0..grid.n_steps {
        let t = grid.t(n);
        let noise = problem.diffuse(ops, t, &x, &y, &dw[n]);
        let x_next = advance(problem, ops, t, dt, (&x, &y, &z), &noise);
        let y_next = euler_value(problem, ops, t, dt, (&x, &y, &z), &noise);
        let (reference, z_next) = model.value_and_grad(ops, grid.t(n + 1), &x_next);
        mismatch.push(ops, &y_next, &reference);
        mismatch.watch(n + 1, &y_next);
        mismatch.watch(n + 1, &reference);
        (x, y, z, y_net) = (x_next, y_next, z_next, reference);
    }
    let norm = 1.0 / batch.norm_paths as f64;
    let (pathwise, watched) = mismatch.finish(ops, norm / grid.n_steps as f64);
    let (tv, tg) = terminal_terms(problem, ops, &x, &y_net, &z, norm);
    assemble(ops, cfg, batch, pathwise, tv, tg, watched)
}

pub fn scheme3_loss<P, O, V>(
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
    check_shapes(problem, cfg, batch)?;
    let grid = &cfg.grid;
    let dt = grid.dt();
    // With μ and σ free of (Y, Z) both branches see identical states, so
    // branch (2) reuses branch (1)'s states, noise and network gradients.
    let collapsed = problem.is_decoupled();
    let (x0, dw) = constants(ops, batch);
    let (y0, z0) = model.value_and_grad(ops, grid.t(0), &x0);
    let (mut x1, mut y1, mut z1) = (x0.clone(), y0.clone(), z0.clone());
    let (mut x2, mut y2, mut z2) = (x0, y0, z0);
    let mut mismatch = Mismatch::new();
    mismatch.watch(0, &y1);
    for n in 0..grid.n_steps {
        let t = grid.t(n);
        let noise1 = problem.diffuse(ops, t, &x1, &y1, &dw[n]);
        let x1_next = advance(problem, ops, t, dt, (&x1, &y1, &z1), &noise1);
        let (y1_next, z1_next) = model.value_and_grad(ops, grid.t(n + 1), &x1_next);
        let (x2_next, y2_next, z2_next) = if collapsed {
            let y2_next = euler_value(problem, ops, t, dt, (&x2, &y2, &z2), &noise1);
            (x1_next.clone(), y2_next, z1_next.clone())
        } else {
            let state_noise = match cfg.scheme3_sigma {
                Scheme3Sigma::AsPrinted => noise1.clone(),
                Scheme3Sigma::OwnBranch => problem.diffuse(ops, t, &x2, &y2, &dw[n]),
            };
            let x2_next = advance(problem, ops, t, dt, (&x2, &y2, &z2), &state_noise);
            let value_noise = problem.diffuse(ops, t, &x2, &y2, &dw[n]);
            let y2_next = euler_value(problem, ops, t, dt, (&x2, &y2, &z2), &value_noise);
            let z2_next = model.value_and_grad(ops, grid.t(n + 1), &x2_next).1;
            (x2_next, y2_next, z2_next)
        };
        mismatch.push(ops, &y2_next, &y1_next);
        mismatch.watch(n + 1, &y2_next);
        mismatch.watch(n + 1, &y1_next);
        (x1, y1, z1) = (x1_next, y1_next, z1_next);
        (x2, y2, z2) = (x2_next, y2_next, z2_next);
    }
    let norm = 1.0 / batch.norm_paths as f64;
    let (pathwise, watched) = mismatch.finish(ops, norm / grid.n_steps as f64);
    let (tv, tg) = terminal_terms(problem, ops, &x1, &y1, &z1, norm);
    assemble(ops, cfg, batch, pathwise, tv, tg, watched)
}

/// Branch-(2) states of a Scheme 3 rollout, which for decoupled problems
/// coincide with the forward Euler states.
pub fn scheme3_branch2_states<P, O, V>(
    problem: &P,
    ops: &O,
    model: &V,
    cfg: &SchemeConfig,
    batch: &Batch,
) -> Result<Vec<Matrix>, SchemeError>
where
    P: Fbsde,
    O: Ops,
    V: ValueModel<O>,
{
    check_shapes(problem, cfg, batch)?;
    let grid = &cfg.grid;
    let dt = grid.dt();
    let (x0, dw) = constants(ops, batch);
    let (y0, z0) = model.value_and_grad(ops, grid.t(0), &x0);
    let (mut x1, mut y1, mut z1) = (x0.clone(), y0.clone(), z0.clone());
    let (mut x2, mut y2, mut z2) = (x0, y0, z0);
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    out.push(ops.to_matrix(&x2));
    for n in 0..grid.n_steps {
        let t = grid.t(n);
        let noise1 = problem.diffuse(ops, t, &x1, &y1, &dw[n]);
        let x1_next = advance(problem, ops, t, dt, (&x1, &y1, &z1), &noise1);
        let (y1_next, z1_next) = model.value_and_grad(ops, grid.t(n + 1), &x1_next);
        let state_noise = match cfg.scheme3_sigma {
            Scheme3Sigma::AsPrinted => noise1,
            Scheme3Sigma::OwnBranch => problem.diffuse(ops, t, &x2, &y2, &dw[n]),
        };
        let x2_next = advance(problem, ops, t, dt, (&x2, &y2, &z2), &state_noise);
        let value_noise = problem.diffuse(ops, t, &x2, &y2, &dw[n]);
        let y2_next = euler_value(problem, ops, t, dt, (&x2, &y2, &z2), &value_noise);
        let z2_next = model.value_and_grad(ops, grid.t(n + 1), &x2_next).1;
        out.push(ops.to_matrix(&x2_next));
        (x1, y1, z1) = (x1_next, y1_next, z1_next);
        (x2, y2, z2) = (x2_next, y2_next, z2_next);
    }
    Ok(out)
}
