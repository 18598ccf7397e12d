//! Adam and the plateau learning-rate schedule used for training.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::tensor::{GradStore, ParamStore};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub lr: f64,
    step: u64,
    first: IndexMap<String, Vec<T>>,
    second: IndexMap<String, Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, lr: f64) -> Self {
        Adam {
            config,
            lr,
            step: 0,
            first: IndexMap::new(),
            second: IndexMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter that has a gradient entry.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &GradStore<T>) {
        self.step += 1;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let t = self.step as i32;
        let corr1 = T::lit(1.0 - b1.powi(t));
        let corr2 = T::lit(1.0 - b2.powi(t));
        let (b1, b2) = (T::lit(b1), T::lit(b2));
        let (lr, eps) = (T::lit(self.lr), T::lit(self.config.eps));
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            debug_assert_eq!(p.values.len(), g.len());
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p.values[i] = p.values[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrScheduleConfig {
    pub initial_lr: f64,
    pub factor: f64,
    pub patience_epochs: usize,
    /// Relative improvement over the best loss that counts as progress.
    pub min_improvement: f64,
    pub floor: f64,
}

impl Default for LrScheduleConfig {
    fn default() -> Self {
        LrScheduleConfig {
            initial_lr: 0.001,
            factor: 0.1,
            patience_epochs: 10,
            min_improvement: 0.10,
            floor: 1e-6,
        }
    }
}

/// Multiplies the learning rate by `factor` once `patience_epochs`
/// consecutive validation losses have failed to undercut the best loss by
/// `min_improvement` (relative), never going below `floor`.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub config: LrScheduleConfig,
    lr: f64,
    best: f64,
    stale_epochs: usize,
}

impl LrSchedule {
    pub fn new(config: LrScheduleConfig) -> Self {
        LrSchedule {
            lr: config.initial_lr,
            config,
            best: f64::INFINITY,
            stale_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's validation loss and returns the learning rate for
    /// the next epoch.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best * (1.0 - self.config.min_improvement) {
            self.best = val_loss;
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
            if self.stale_epochs >= self.config.patience_epochs {
                self.lr = (self.lr * self.config.factor).max(self.config.floor);
                self.stale_epochs = 0;
            }
        }
        self.lr
    }
}

/// Learning rate after replaying a whole validation-loss history.
pub fn schedule_step(config: &LrScheduleConfig, val_loss_history: &[f64]) -> f64 {
    let mut s = LrSchedule::new(*config);
    for &l in val_loss_history {
        s.step(l);
    }
    s.lr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn scalar_store(w: f64) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.insert("w".into(), Tensor::new(vec![1], vec![w]).unwrap());
        p
    }

    fn grad(g: f64) -> GradStore<f64> {
        let mut m = GradStore::new();
        m.insert("w".into(), vec![g]);
        m
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_store(3.0);
        let mut adam = Adam::new(AdamConfig::default(), 0.001);
        for _ in 0..100 {
            adam.step(&mut p, &grad(0.0));
        }
        assert_eq!(p["w"].values[0], 3.0);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar_store(0.0);
        let mut adam = Adam::new(AdamConfig::default(), 0.001);
        adam.step(&mut p, &grad(1.0));
        let want = -0.001 / (1.0 + 1e-8);
        assert!((p["w"].values[0] - want).abs() < 1e-15);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = scalar_store(5.0);
        let mut adam = Adam::new(AdamConfig::default(), 0.001);
        let mut hit = None;
        for step in 0..10_000 {
            let w = p["w"].values[0];
            if w.abs() < 1e-3 {
                hit = Some(step);
                break;
            }
            adam.step(&mut p, &grad(2.0 * w));
        }
        assert!(hit.is_some(), "final w = {}", p["w"].values[0]);
    }

    #[test]
    fn schedule_rules() {
        let cfg = LrScheduleConfig::default();
        let halving: Vec<f64> = (0..40).map(|i| 0.5f64.powi(i)).collect();
        assert_eq!(schedule_step(&cfg, &halving), 0.001);

        // one epoch sets the best, ten flat epochs trigger the reduction
        assert_eq!(schedule_step(&cfg, &[1.0; 10]), 0.001);
        assert!((schedule_step(&cfg, &[1.0; 11]) - 0.0001).abs() < 1e-18);

        // 5% per epoch clears the 10% bar against the best every few epochs
        let steady: Vec<f64> = (0..30).map(|i| 0.95f64.powi(i)).collect();
        assert_eq!(schedule_step(&cfg, &steady), 0.001);
        // 1% per epoch only reaches 9.6% after ten epochs
        let slow: Vec<f64> = (0..11).map(|i| 0.99f64.powi(i)).collect();
        assert!((schedule_step(&cfg, &slow) - 0.0001).abs() < 1e-18);

        assert_eq!(schedule_step(&cfg, &[1.0; 1000]), 1e-6);
    }
}
