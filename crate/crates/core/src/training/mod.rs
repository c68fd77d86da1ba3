//! Adam and the staged-learning-rate training loop.
//!
//! Step `s` draws a fresh batch from the noise key `(seed, Train, s)`, so a
//! run is a pure function of its configuration and seed, and resuming from
//! a saved state replays exactly the steps an uninterrupted run would take.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::autodiff::{Eager, Matrix};
use crate::networks::NetworkError;
use crate::problems::Fbsde;
use crate::schemes::{self, Batch, DeepBsdeParams, LossBreakdown, Model, ModelConfig, SchemeConfig, SchemeError};
use crate::simulate::{anchored_x0, sample_increments_range, Domain, NoiseKey};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("parameter, gradient and moment shapes disagree")]
    Shape,
    #[error("invalid schedule: {0}")]
    Schedule(&'static str),
    #[error("step {step}: {source}")]
    Scheme { step: usize, source: SchemeError },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub lr: f64,
    pub steps: usize,
}

/// Piecewise-constant learning rates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub stages: Vec<Stage>,
}

impl TrainSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self, TrainError> {
        let s = Self { stages };
        s.validate()?;
        Ok(s)
    }

    /// Five decades from `1e-3` to `1e-7`, 10000 steps each.
    pub fn full_scale() -> Self {
        Self::decades(&[1e-3, 1e-4, 1e-5, 1e-6, 1e-7], 10_000)
    }

    /// 3000 steps: 1500 at `1e-3`, 1000 at `1e-4`, 500 at `1e-5`.
    pub fn desk() -> Self {
        Self {
            stages: [(1e-3, 1500), (1e-4, 1000), (1e-5, 500)]
                .into_iter()
                .map(|(lr, steps)| Stage { lr, steps })
                .collect(),
        }
    }

    fn decades(rates: &[f64], steps: usize) -> Self {
        Self {
            stages: rates.iter().map(|&lr| Stage { lr, steps }).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        for s in &self.stages {
            if !(s.lr > 0.0 && s.lr.is_finite()) {
                return Err(TrainError::Schedule("learning rates must be positive"));
            }
            if s.steps == 0 {
                return Err(TrainError::Schedule("every stage needs at least one step"));
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.steps).sum()
    }

    /// Rate for zero-based `step`, or `None` past the end.
    pub fn lr_at(&self, step: usize) -> Option<f64> {
        let mut end = 0;
        for s in &self.stages {
            end += s.steps;
            if step < end {
                return Some(s.lr);
            }
        }
        None
    }
}

/// Runs independent jobs and returns their results in job order.
pub trait Executor {
    fn map<T, F>(&self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..jobs).map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub scheme: SchemeConfig,
    pub schedule: TrainSchedule,
    pub seed: u64,
    /// Paths per chunk, or 0 for the whole batch.
    pub chunk_paths: usize,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(scheme: SchemeConfig, schedule: TrainSchedule, seed: u64) -> Self {
        Self {
            scheme,
            schedule,
            seed,
            chunk_paths: 0,
            adam: AdamConfig::default(),
        }
    }

    fn chunks(&self) -> (usize, usize) {
        let m = self.scheme.batch;
        let size = if self.chunk_paths == 0 { m } else { self.chunk_paths.min(m) };
        (size, m.div_ceil(size))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// One-based index of the step that produced this loss.
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
    /// Completed steps.
    pub step: usize,
    pub history: Vec<LossRecord>,
}

impl TrainState {
    pub fn new(model: Model, adam: AdamConfig) -> Self {
        let adam = AdamState::new(adam, &model.tensors());
        Self {
            model,
            adam,
            step: 0,
            history: Vec::new(),
        }
    }
}

/// Fresh parameters for `config`. Deep BSDE starts `Y_0` at `g(x₀)`.
pub fn init_model<P: Fbsde>(problem: &P, config: &ModelConfig, seed: u64) -> Result<Model, NetworkError> {
    Ok(match config {
        ModelConfig::Field(c) => Model::Field(c.init(seed)?),
        ModelConfig::DeepBsde(c) => {
            let g0 = problem.terminal(&Eager, &anchored_x0(problem, 1)).data()[0];
            Model::DeepBsde(DeepBsdeParams::init(*c, seed, g0)?)
        }
    })
}

/// Loss and gradient of the batch drawn from `key`, split into chunks
/// that are reduced in path order.
pub fn batch_loss_and_grad<P, E>(
    problem: &P,
    model: &Model,
    config: &TrainConfig,
    key: NoiseKey,
    exec: &E,
) -> Result<(LossBreakdown, Vec<Matrix>), SchemeError>
where
    P: Fbsde + Sync,
    E: Executor,
{
    let m = config.scheme.batch;
    let (size, count) = config.chunks();
    let grid = config.scheme.grid;
    let d = problem.dim();
    let parts = exec.map(count, |c| {
        let paths = c * size..((c + 1) * size).min(m);
        let x0 = anchored_x0(problem, paths.len());
        let dw = sample_increments_range(key, paths.clone(), &grid, d);
        let batch = Batch {
            x0: &x0,
            dw: &dw,
            norm_paths: m,
            path_offset: paths.start,
        };
        schemes::loss_and_grad(problem, model, &config.scheme, &batch)
    });
    let mut parts = parts.into_iter();
    let (mut loss, mut grads) = parts.next().expect("at least one chunk")?;
    for part in parts {
        let (l, g) = part?;
        loss.accumulate(&l);
        grads.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b));
    }
    Ok((loss, grads))
}

/// Runs the remaining scheduled steps of `state`.
///
/// `observer` sees the state after every update and may stop the run. On a
/// non-finite loss the state is left at the last completed step.
pub fn train<P, E>(
    problem: &P,
    config: &TrainConfig,
    state: &mut TrainState,
    exec: &E,
    observer: &mut dyn FnMut(&TrainState, &LossRecord) -> ControlFlow<()>,
) -> Result<(), TrainError>
where
    P: Fbsde + Sync,
    E: Executor,
{
    config.schedule.validate()?;
    config
        .scheme
        .validate()
        .map_err(|source| TrainError::Scheme { step: state.step, source })?;
    while let Some(lr) = config.schedule.lr_at(state.step) {
        let key = NoiseKey::new(config.seed, Domain::Train, state.step as u64);
        let (loss, grads) = batch_loss_and_grad(problem, &state.model, config, key, exec)
            .map_err(|source| TrainError::Scheme {
                step: state.step + 1,
                source,
            })?;
        adam_step(&mut state.model.tensors_mut(), &grads, &mut state.adam, lr)?;
        state.step += 1;
        let record = LossRecord {
            step: state.step,
            lr,
            loss,
        };
        state.history.push(record);
        if observer(state, &record).is_break() {
            break;
        }
    }
    Ok(())
}
