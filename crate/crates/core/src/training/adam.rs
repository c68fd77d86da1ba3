use alloc::vec::Vec;

use super::TrainError;
use crate::autodiff::Matrix;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
    /// Updates applied so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Matrix]) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    fn check(&self, params: &[&mut Matrix], grads: &[Matrix]) -> Result<(), TrainError> {
        let same = params.len() == grads.len()
            && params.len() == self.first.len()
            && params
                .iter()
                .zip(grads)
                .zip(&self.first)
                .all(|((p, g), m)| p.shape() == g.shape() && p.shape() == m.shape());
        if same {
            Ok(())
        } else {
            Err(TrainError::Shape)
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    state.check(params, grads)?;
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.step += 1;
    // β^k underflows long before k leaves i32
    let k = state.step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - math::powi(beta1, k);
    let c2 = 1.0 - math::powi(beta2, k);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            p[i] -= lr * (m[i] / c1) / (math::sqrt(v[i] / c2) + eps);
        }
    }
    Ok(())
}
