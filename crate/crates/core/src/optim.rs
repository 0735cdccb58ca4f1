//! Adam with row-sparse ("lazy") updates for embedding tables.
//!
//! Only rows listed as touched by the current batch have their moments and
//! parameters updated, so embeddings that a batch never looks up stay exactly
//! where they are. The bias correction uses a global step counter.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment buffers for one table of `rows × width` parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    width: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, rows: usize, width: usize) -> Self {
        Self {
            config,
            width,
            m: vec![0.0; rows * width],
            v: vec![0.0; rows * width],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Advances the shared step counter. Call once per batch before the
    /// per-table [`Adam::update_rows`] calls.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies one Adam update to every row in `rows` whose gradient is not
    /// identically zero.
    pub fn update_rows(&mut self, params: &mut [f64], grads: &[f64], rows: &[usize]) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step.max(1) as f64;
        let bc1 = 1.0 - libm::pow(beta1, t);
        let bc2 = 1.0 - libm::pow(beta2, t);
        let w = self.width;
        for &row in rows {
            let range = row * w..(row + 1) * w;
            let g = &grads[range.clone()];
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let m = &mut self.m[range.clone()];
            let v = &mut self.v[range.clone()];
            let p = &mut params[range];
            for i in 0..w {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = Adam::new(AdamConfig::default(), 3, 2);
        let mut params = vec![1.0, -2.0, 0.5, 0.25, 3.0, 4.0];
        let before = params.clone();
        adam.begin_step();
        adam.update_rows(&mut params, &[0.0; 6], &[0, 1, 2]);
        assert_eq!(params, before);

        // also after the moments are non-zero
        adam.begin_step();
        adam.update_rows(&mut params, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0], &[0]);
        let after_first = params.clone();
        adam.begin_step();
        adam.update_rows(&mut params, &[0.0; 6], &[0, 1, 2]);
        assert_eq!(params, after_first);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let config = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(config, 1, 2);
        let mut params = vec![0.0, 0.0];
        adam.begin_step();
        adam.update_rows(&mut params, &[3.0, -0.5], &[0]);
        // bias-corrected first step is lr · sign(g) up to epsilon
        assert!((params[0] + 0.1).abs() < 1e-7);
        assert!((params[1] - 0.1).abs() < 1e-7);
    }

    #[test]
    fn untouched_rows_are_skipped() {
        let mut adam = Adam::new(AdamConfig::default(), 2, 1);
        let mut params = vec![1.0, 1.0];
        adam.begin_step();
        adam.update_rows(&mut params, &[1.0, 1.0], &[1]);
        assert_eq!(params[0], 1.0);
        assert!(params[1] < 1.0);
    }
}
