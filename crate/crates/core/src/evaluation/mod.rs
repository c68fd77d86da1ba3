//! Accuracy of trained models against closed-form solutions, Richardson
//! extrapolation across step counts, and perturbed-start studies.
//!
//! Verification paths live on a fine grid drawn from the `Verify` noise
//! domain, which training never touches. For decoupled problems the
//! forward states are the same whatever scheme produced the model, so the
//! second-branch states of Scheme 3 are the Euler states used here.

use alloc::vec::Vec;

use crate::autodiff::{Eager, Matrix};
use crate::networks::ValueModel;
use crate::problems::{Exact, Fbsde};
use crate::simulate::{
    anchored_x0, ensure_finite, euler_x_step, sample_increments_range, uniform01, Domain, NoiseKey, SimError,
    TimeGrid,
};
use crate::training::Executor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("problem `{0}` has no closed-form solution")]
    NoExact(&'static str),
    #[error("verification needs a decoupled problem")]
    Coupled,
    #[error("invalid evaluation setting: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub n_paths: usize,
    pub fine_steps: usize,
    pub seed: u64,
    /// Paths per parallel job, or 0 for one job.
    pub chunk_paths: usize,
}

impl VerifyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n_paths: 1000,
            fine_steps: 1000,
            seed,
            chunk_paths: 0,
        }
    }
}

/// Relative error statistics per verification station.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub stations: Vec<f64>,
    pub mean: Vec<f64>,
    /// Population standard deviation over paths.
    pub sd: Vec<f64>,
    /// Relative error of the model at the anchor `(0, x₀)`.
    pub y0_rel_error: f64,
    pub paths: usize,
}

impl ErrorReport {
    pub fn mean_plus_2sd(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.sd).map(|(m, s)| m + 2.0 * s).collect()
    }

    pub fn overall_max_mean(&self) -> f64 {
        self.mean.iter().fold(0.0, |a, &b| if b > a { b } else { a })
    }

    /// Stations with `t ≤ t_max` only.
    pub fn truncated(&self, t_max: f64) -> Self {
        let keep = self.stations.iter().take_while(|&&t| t <= t_max).count();
        Self {
            stations: self.stations[..keep].to_vec(),
            mean: self.mean[..keep].to_vec(),
            sd: self.sd[..keep].to_vec(),
            y0_rel_error: self.y0_rel_error,
            paths: self.paths,
        }
    }
}

/// `2b − a`: cancels a leading error term proportional to `N^{-1/2}`
/// between `a` at `N` steps and `b` at `4N` steps.
pub fn richardson(a: f64, b: f64) -> f64 {
    2.0 * b - a
}

/// Pointwise extrapolation `2 u_fine − u_coarse` of two models.
#[derive(Debug, Clone, Copy)]
pub struct Extrapolated<'a, A, B> {
    pub coarse: &'a A,
    pub fine: &'a B,
}

impl<A: ValueModel<Eager>, B: ValueModel<Eager>> ValueModel<Eager> for Extrapolated<'_, A, B> {
    fn value_and_grad(&self, ops: &Eager, t: f64, x: &Matrix) -> (Matrix, Matrix) {
        let (ua, ga) = self.coarse.value_and_grad(ops, t, x);
        let (ub, gb) = self.fine.value_and_grad(ops, t, x);
        let ex = |b: f64, a: f64| richardson(a, b);
        (ub.zip_map(&ua, ex), gb.zip_map(&ga, ex))
    }

    fn value(&self, ops: &Eager, t: f64, x: &Matrix) -> Matrix {
        let ua = self.coarse.value(ops, t, x);
        self.fine.value(ops, t, x).zip_map(&ua, |b, a| richardson(a, b))
    }
}

/// Relative errors along fine Euler paths from the anchor state.
pub fn verify_relative_error<P, V, E>(
    model: &V,
    problem: &P,
    cfg: &VerifyConfig,
    exec: &E,
) -> Result<ErrorReport, EvalError>
where
    P: Fbsde + Sync,
    V: ValueModel<Eager> + Sync,
    E: Executor,
{
    neighborhood_study(model, problem, 0.0, cfg, exec)
}

/// Anchor state with coordinates scaled by `1 + ε_j`, `ε_j ~ U(−R, R)`.
/// Path 0 keeps the anchor.
pub fn perturbed_start(problem: &impl Fbsde, radius: f64, seed: u64, path: usize) -> Vec<f64> {
    let x0 = problem.x0();
    if radius == 0.0 || path == 0 {
        return x0.to_vec();
    }
    let mut rng = NoiseKey::new(seed, Domain::Neighborhood, 0).path_rng(path as u64);
    x0.iter()
        .map(|&v| v * (1.0 + radius * (2.0 * uniform01(&mut rng) - 1.0)))
        .collect()
}

/// [`verify_relative_error`] with starts drawn from the box of relative
/// half-width `radius` around the anchor. `radius = 0` is verification.
pub fn neighborhood_study<P, V, E>(
    model: &V,
    problem: &P,
    radius: f64,
    cfg: &VerifyConfig,
    exec: &E,
) -> Result<ErrorReport, EvalError>
where
    P: Fbsde + Sync,
    V: ValueModel<Eager> + Sync,
    E: Executor,
{
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(EvalError::Config("neighborhood radius must be finite and non-negative"));
    }
    if cfg.n_paths == 0 {
        return Err(EvalError::Config("at least one verification path"));
    }
    if !problem.has_exact() {
        return Err(EvalError::NoExact(problem.name()));
    }
    if !problem.is_decoupled() {
        return Err(EvalError::Coupled);
    }
    let grid = TimeGrid::new(cfg.fine_steps, problem.horizon())?;
    let m = cfg.n_paths;
    let size = if cfg.chunk_paths == 0 { m } else { cfg.chunk_paths.min(m) };
    let jobs = m.div_ceil(size);
    let parts = exec.map(jobs, |c| {
        let paths = c * size..((c + 1) * size).min(m);
        chunk_errors(model, problem, radius, cfg, &grid, paths)
    });
    // station-major error columns, concatenated in path order
    let stations = grid.n_steps + 1;
    let mut errors: Vec<Vec<f64>> = (0..stations).map(|_| Vec::with_capacity(m)).collect();
    for part in parts {
        for (acc, col) in errors.iter_mut().zip(part?) {
            acc.extend_from_slice(&col);
        }
    }
    let (mean, sd) = errors.iter().map(|col| mean_sd(col)).unzip();
    Ok(ErrorReport {
        stations: grid.stations(),
        mean,
        sd,
        y0_rel_error: errors[0][0],
        paths: m,
    })
}

fn chunk_errors<P: Fbsde, V: ValueModel<Eager>>(
    model: &V,
    problem: &P,
    radius: f64,
    cfg: &VerifyConfig,
    grid: &TimeGrid,
    paths: core::ops::Range<usize>,
) -> Result<Vec<Vec<f64>>, EvalError> {
    let d = problem.dim();
    let rows = paths.len();
    let mut x = if radius == 0.0 {
        anchored_x0(problem, rows)
    } else {
        let mut x = Matrix::zeros(rows, d);
        for (r, p) in paths.clone().enumerate() {
            x.row_mut(r).copy_from_slice(&perturbed_start(problem, radius, cfg.seed, p));
        }
        x
    };
    let key = NoiseKey::new(cfg.seed, Domain::Verify, 0);
    let dw = sample_increments_range(key, paths, grid, d);
    let (y, z) = (Matrix::zeros(rows, 1), Matrix::zeros(rows, d));
    let exact = Exact(problem);
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    for n in 0..=grid.n_steps {
        let t = grid.t(n);
        let approx = model.value(&Eager, t, &x);
        let truth = exact.value(&Eager, t, &x);
        let e = approx.zip_map(&truth, |a, u| (a - u).abs() / u.abs());
        ensure_finite(&e, "relative error", n)?;
        out.push(e.into_data());
        if n < grid.n_steps {
            x = euler_x_step(problem, &Eager, t, &x, &y, &z, &dw[n], grid.dt());
            ensure_finite(&x, "state", n + 1)?;
        }
    }
    Ok(out)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    (mean, crate::math::sqrt(var))
}

/// Relative error of `Y_0` at one step count, with the extrapolated error
/// where the quarter step count is also present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n_steps: usize,
    pub y0: f64,
    pub raw_error: f64,
    pub extrapolated_error: Option<f64>,
}

/// Rows for `(N, Y_0 estimate)` pairs in ascending `N`.
pub fn convergence_table(estimates: &[(usize, f64)], exact_y0: f64) -> Vec<ConvergenceRow> {
    let mut sorted = estimates.to_vec();
    sorted.sort_by_key(|&(n, _)| n);
    let rel = |v: f64| (v - exact_y0).abs() / exact_y0.abs();
    sorted
        .iter()
        .map(|&(n, y0)| {
            let coarse = (n % 4 == 0)
                .then(|| sorted.iter().find(|&&(k, _)| k * 4 == n))
                .flatten();
            ConvergenceRow {
                n_steps: n,
                y0,
                raw_error: rel(y0),
                extrapolated_error: coarse.map(|&(_, a)| rel(richardson(a, y0))),
            }
        })
        .collect()
}
