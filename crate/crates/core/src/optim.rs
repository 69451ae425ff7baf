//! AdamW with decoupled weight decay.
//!
//! The update per parameter is
//!
//! ```text
//! m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
//! m̂ = m/(1−β₁ᵗ)            v̂ = v/(1−β₂ᵗ)
//! p ← p − lr·( m̂/(√v̂+eps) + wd·p )
//! ```
//!
//! — the decay term multiplies the raw parameter and is *not* routed through
//! the moment estimates, so shrinkage toward zero is independent of the
//! gradient magnitude. All state is f32 and updates are elementwise in a
//! fixed order, which keeps optimization bit-reproducible across runs.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {beta}")));
            }
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(Error::config(format!("eps must be positive, got {}", self.eps)));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Per-parameter first/second moment buffers plus the shared step counter.
#[derive(Debug)]
pub struct AdamW {
    config: AdamWConfig,
    step: u32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, param_sizes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(AdamW {
            config,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn step_count(&self) -> u32 {
        self.step
    }

    /// Apply one update. `slots` and `grads` must line up with the sizes the
    /// optimizer was built with; each slot is replaced by a fresh tensor
    /// holding the updated values (gradients are read, never mutated).
    pub fn step(&mut self, slots: &mut [&mut Tensor], grads: &[Vec<f32>]) -> Result<()> {
        if slots.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} parameters but got {} slots and {} gradients",
                self.m.len(),
                slots.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((slot, grad), (m, v)) in
            slots.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if grad.len() != m.len() {
                return Err(Error::contract(format!(
                    "gradient length {} does not match parameter length {}",
                    grad.len(),
                    m.len()
                )));
            }
            let mut data = slot.data().to_vec();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * data[i]);
            }
            **slot = Tensor::param(slot.shape().to_vec(), data)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(data: &[f32]) -> Tensor {
        Tensor::param(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn first_step_hand_value() {
        // p=1, g=1, lr=1e-3, wd=0.01: after bias correction m̂=v̂=1, so
        // p' = 1 − 1e-3·(1/(1+1e-8) + 0.01·1) ≈ 0.998990.
        let config = AdamWConfig { lr: 1e-3, ..AdamWConfig::default() };
        let mut opt = AdamW::new(config, &[1]).unwrap();
        let mut p = param(&[1.0]);
        opt.step(&mut [&mut p], &[vec![1.0]]).unwrap();
        assert!((p.data()[0] - 0.998_990).abs() < 1e-6, "got {}", p.data()[0]);
    }

    #[test]
    fn matches_scalar_reference_over_many_steps() {
        // Independent same-precision scalar walk of the update equations.
        let config = AdamWConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        };
        let mut opt = AdamW::new(config, &[1]).unwrap();
        let mut p = param(&[0.5]);

        let (mut rp, mut rm, mut rv) = (0.5f32, 0.0f32, 0.0f32);
        for t in 1..=25 {
            let g = (t as f32 * 0.37).sin(); // deterministic, sign-varying
            opt.step(&mut [&mut p], &[vec![g]]).unwrap();

            rm = 0.9 * rm + (1.0 - 0.9f32) * g;
            rv = 0.999 * rv + (1.0 - 0.999f32) * g * g;
            let m_hat = rm / (1.0 - 0.9f32.powi(t));
            let v_hat = rv / (1.0 - 0.999f32.powi(t));
            rp -= 0.01 * (m_hat / (v_hat.sqrt() + 1e-8) + 0.01 * rp);
            assert!(
                (p.data()[0] - rp).abs() <= 1e-12,
                "step {t}: {} vs reference {rp}",
                p.data()[0]
            );
        }
    }

    #[test]
    fn decay_is_decoupled_from_the_gradient_path() {
        // With g=0 the moments stay zero, so the entire update is the decay
        // term: p ← p·(1 − lr·wd) each step, regardless of p's magnitude.
        let config = AdamWConfig { lr: 0.1, weight_decay: 0.5, ..AdamWConfig::default() };
        let mut opt = AdamW::new(config, &[2]).unwrap();
        let mut p = param(&[8.0, -2.0]);
        opt.step(&mut [&mut p], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(p.data(), &[8.0 * (1.0 - 0.05), -2.0 * (1.0 - 0.05)]);
    }

    #[test]
    fn zero_gradients_and_zero_decay_leave_parameters_unchanged() {
        let config = AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() };
        let mut opt = AdamW::new(config, &[3]).unwrap();
        let mut p = param(&[0.25, -1.5, 3.0]);
        let before = p.data().to_vec();
        for _ in 0..3 {
            opt.step(&mut [&mut p], &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(p.data(), &before[..]);
    }

    #[test]
    fn updated_tensors_keep_requires_grad() {
        let mut opt = AdamW::new(AdamWConfig::default(), &[1]).unwrap();
        let mut p = param(&[1.0]);
        opt.step(&mut [&mut p], &[vec![0.5]]).unwrap();
        assert!(p.requires_grad());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        assert!(AdamWConfig { lr: 0.0, ..AdamWConfig::default() }.validate().is_err());
        assert!(AdamWConfig { beta1: 1.0, ..AdamWConfig::default() }.validate().is_err());
        assert!(AdamWConfig { eps: 0.0, ..AdamWConfig::default() }.validate().is_err());
        assert!(
            AdamWConfig { weight_decay: -0.1, ..AdamWConfig::default() }.validate().is_err()
        );
    }

    #[test]
    fn shape_mismatches_are_contract_errors() {
        let mut opt = AdamW::new(AdamWConfig::default(), &[2]).unwrap();
        let mut p = param(&[1.0, 2.0]);
        assert!(opt.step(&mut [&mut p], &[vec![1.0]]).is_err());
        assert!(opt.step(&mut [], &[]).is_err());
    }
}
