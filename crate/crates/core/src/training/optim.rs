use serde::{Deserialize, Serialize};

use super::GradientSet;
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ModelParams, grads: &GradientSet, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (((p, &g), m), v) in params
        .as_mut_slice()
        .iter_mut()
        .zip(grads.as_slice())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    /// Smallest decrease of the validation loss that counts as improvement.
    pub threshold: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 10,
            min_lr: 1e-5,
            threshold: 1e-4,
        }
    }
}

/// Reduce-on-plateau learning-rate controller.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState {
    pub lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauState {
    pub fn new(lr0: f64) -> Self {
        Self {
            lr: lr0,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feeds one epoch's validation loss; returns the learning rate for the
    /// next epoch.
    pub fn step(&mut self, val_loss: f64, cfg: &PlateauConfig) -> f64 {
        if val_loss < self.best - cfg.threshold {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= cfg.patience {
                self.lr = (self.lr * cfg.factor).max(cfg.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// Learning rate after replaying a whole validation-loss history.
pub fn plateau_schedule(history: &[f64], lr0: f64, cfg: &PlateauConfig) -> f64 {
    let mut s = PlateauState::new(lr0);
    for &l in history {
        s.step(l, cfg);
    }
    s.lr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn scalar_params() -> (ModelParams, GradientSet) {
        let c = ModelConfig::default();
        let p = ModelParams::init(&c, 1).unwrap();
        let g = p.zeros_like();
        (p, g)
    }

    #[test]
    fn zero_gradient_and_zero_lr_are_no_ops() {
        let (mut p, g) = scalar_params();
        let before = p.clone();
        let mut s = AdamState::new(p.len());
        adam_step(&mut p, &g, &mut s, 1e-3);
        assert_eq!(p, before);
        let mut g2 = g.clone();
        g2.fill(0.37);
        adam_step(&mut p, &g2, &mut s, 0.0);
        assert_eq!(
            p.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            before
                .as_slice()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let (mut p, mut g) = scalar_params();
        g.fill(-2.5);
        let mut s = AdamState::new(p.len());
        let mut prev = p.as_slice()[0];
        for _ in 0..200 {
            adam_step(&mut p, &g, &mut s, 0.01);
            let now = p.as_slice()[0];
            assert!((now - prev - 0.01).abs() < 1e-6);
            prev = now;
        }
    }

    #[test]
    fn three_hand_steps() {
        let (mut p, mut g) = scalar_params();
        let x0 = p.as_slice()[5];
        let mut s = AdamState::new(p.len());
        let grads = [0.5, -1.0, 2.0];
        let lr = 0.1;
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, x0);
        for (t, &gt) in grads.iter().enumerate() {
            g.fill(gt);
            adam_step(&mut p, &g, &mut s, lr);
            m = 0.9 * m + 0.1 * gt;
            v = 0.999 * v + 0.001 * gt * gt;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            x -= lr * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.as_slice()[5] - x).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn plateau_rules() {
        let cfg = PlateauConfig::default();
        let improving: Vec<f64> = (0..30).map(|i| 1.0 - 0.01 * i as f64).collect();
        assert_eq!(plateau_schedule(&improving, 2e-3, &cfg), 2e-3);
        assert_eq!(plateau_schedule(&[0.5; 11], 2e-3, &cfg), 1e-3);
        assert_eq!(plateau_schedule(&[0.5; 10], 2e-3, &cfg), 2e-3);
        assert_eq!(plateau_schedule(&[0.5; 200], 1e-5, &cfg), 1e-5);
        // Improvements smaller than the threshold do not count.
        let tiny: Vec<f64> = (0..11).map(|i| 1.0 - 1e-5 * i as f64).collect();
        assert_eq!(plateau_schedule(&tiny, 2e-3, &cfg), 1e-3);
    }
}
