use indexmap::IndexMap;

use super::params::Parameters;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction and one learning rate per parameter group.
///
/// A tensor's group is the part of its name before the first `.`, so
/// `encoder.0.weight` belongs to group `encoder`.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Parameters,
    second: Parameters,
    group_lr: IndexMap<String, f64>,
}

pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

impl Adam {
    pub fn new(params: &Parameters, group_lr: IndexMap<String, f64>, config: AdamConfig) -> Result<Self> {
        for name in params.names() {
            if !group_lr.contains_key(group_of(name)) {
                return Err(Error::Config(format!("no learning rate for group of {name}")));
            }
        }
        Ok(Self {
            config,
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
            group_lr,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rates(&self) -> &IndexMap<String, f64> {
        &self.group_lr
    }

    /// Multiplies every group's learning rate by `factor`.
    pub fn scale_learning_rates(&mut self, factor: f64) {
        for lr in self.group_lr.values_mut() {
            *lr *= factor;
        }
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters) -> Result<()> {
        params.check_schema(grads)?;
        params.check_schema(&self.first)?;
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let correct1 = 1.0 - beta1.powi(t);
        let correct2 = 1.0 - beta2.powi(t);
        let tensors = params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.first.iter_mut().zip(self.second.iter_mut()));
        for (((name, p), (_, g)), ((_, m), (_, v))) in tensors {
            let lr = self.group_lr[group_of(name)];
            let values = p.values_mut().iter_mut().zip(g.values());
            for ((theta, &grad), (m, v)) in values.zip(m.values_mut().iter_mut().zip(v.values_mut())) {
                *m = beta1 * *m + (1.0 - beta1) * grad;
                *v = beta2 * *v + (1.0 - beta2) * grad * grad;
                let m_hat = *m / correct1;
                let v_hat = *v / correct2;
                *theta -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` after `patience` epochs without a
/// strict decrease of the monitored loss, then restarts the count.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records an epoch loss; returns the factor to apply when a reduction fires.
    pub fn step(&mut self, loss: f64) -> Option<f64> {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
            return None;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            Some(self.factor)
        } else {
            None
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Signals a stop after `patience` consecutive epochs without improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    counter: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            counter: 0,
        }
    }

    /// True when training should stop.
    pub fn step(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.counter = 0;
            false
        } else {
            self.counter += 1;
            self.counter >= self.patience
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// True when the last recorded loss was a new best.
    pub fn improved(&self) -> bool {
        self.counter == 0
    }
}
