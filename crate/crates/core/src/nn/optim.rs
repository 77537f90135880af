use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// A named parameter block paired with its gradient.
pub struct ParamBlock<'a> {
    pub name: String,
    pub values: &'a mut [f64],
    pub grad: &'a [f64],
}

/// Adaptive-moment optimizer with bias correction. Moment buffers are
/// allocated on the first step and keyed by block position.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update over all blocks. Nothing is modified if any gradient is
    /// non-finite or any block is misshapen.
    pub fn step(&mut self, blocks: &mut [ParamBlock<'_>]) -> Result<()> {
        for block in blocks.iter() {
            if block.values.len() != block.grad.len() {
                return Err(Error::Shape {
                    expected: block.values.len(),
                    actual: block.grad.len(),
                    context: "optimizer gradient block",
                });
            }
            if let Some(i) = block.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in parameter block {} at index {i}",
                    block.name
                )));
            }
        }
        if self.first.is_empty() {
            self.first = blocks.iter().map(|b| vec![0.0; b.values.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != blocks.len()
            || self
                .first
                .iter()
                .zip(blocks.iter())
                .any(|(m, b)| m.len() != b.values.len())
        {
            return Err(Error::Contract("optimizer state shaped for other parameters".into()));
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((block, m), v) in blocks.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..block.values.len() {
                let g = block.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                block.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_once(adam: &mut Adam, values: &mut [f64], grad: &[f64]) -> Result<()> {
        adam.step(&mut [ParamBlock {
            name: "p".into(),
            values,
            grad,
        }])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![0.5, -1.5, 2.0];
        for _ in 0..10 {
            step_once(&mut adam, &mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn step_counter_increments_by_one() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![0.0];
        for k in 1..=5 {
            step_once(&mut adam, &mut p, &[1.0]).unwrap();
            assert_eq!(adam.steps(), k);
        }
    }

    /// Under a constant gradient the bias-corrected moments equal g and g²,
    /// so each step moves by lr·|g|/(|g|+ε) → lr against the gradient sign.
    #[test]
    fn constant_gradient_moves_by_lr() {
        for g in [3.0, -0.02] {
            let mut adam = Adam::new(AdamConfig::default());
            let mut p = vec![0.0];
            let mut prev = 0.0;
            for _ in 0..200 {
                step_once(&mut adam, &mut p, &[g]).unwrap();
                let delta = p[0] - prev;
                assert!(delta.signum() == -g.signum());
                assert!((delta.abs() - 1e-3).abs() < 1e-8, "step {delta}");
                prev = p[0];
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_block_and_changes_nothing() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut a = vec![1.0, 2.0];
        let mut b = vec![3.0];
        let err = adam
            .step(&mut [
                ParamBlock {
                    name: "text.w1".into(),
                    values: &mut a,
                    grad: &[0.1, 0.2],
                },
                ParamBlock {
                    name: "spectrum.b2".into(),
                    values: &mut b,
                    grad: &[f64::NAN],
                },
            ])
            .unwrap_err();
        assert!(err.to_string().contains("spectrum.b2"));
        assert_eq!(a, vec![1.0, 2.0]);
        assert_eq!(adam.steps(), 0);
    }
}
