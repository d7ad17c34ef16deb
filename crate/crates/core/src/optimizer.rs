//! Full-batch Adam training.
//!
//! The update follows
//!
//! ```text
//! m <- b1 m + (1 - b1) g
//! v <- b2 v + (1 - b2) g^2
//! theta <- theta - lr * m_hat / sqrt(v_hat + eps)
//! ```
//!
//! with bias-corrected moments `m_hat = m / (1 - b1^k)` and
//! `v_hat = v / (1 - b2^k)`. Setting [`AdamConfig::eps_inside_sqrt`] to
//! `false` uses the more common `m_hat / (sqrt(v_hat) + eps)` instead.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{Compiled, EnergySpec};
use crate::network::{init_xavier, ParamSet};
use crate::sampling::SamplePlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub eps_inside_sqrt: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            eps_inside_sqrt: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// Bias-corrected moments of coordinate `i`.
    pub fn corrected(&self, i: usize) -> (f64, f64) {
        let k = self.step as i32;
        let c = &self.config;
        (
            self.m[i] / (1.0 - c.beta1.powi(k)),
            self.v[i] / (1.0 - c.beta2.powi(k)),
        )
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::LengthMismatch(format!(
            "{} parameters and {} gradients for an optimizer of size {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(bad) = grads.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            epoch: state.step as usize,
            loss: *bad,
        });
    }
    state.step += 1;
    let c = state.config;
    let k = state.step as i32;
    let b1 = 1.0 - c.beta1.powi(k);
    let b2 = 1.0 - c.beta2.powi(k);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = state.m[i] / b1;
        let v_hat = state.v[i] / b2;
        let denom = if c.eps_inside_sqrt {
            (v_hat + c.eps).sqrt()
        } else {
            v_hat.sqrt() + c.eps
        };
        params[i] -= lr * m_hat / denom;
    }
    Ok(())
}

/// A run of `epochs` epochs at a fixed learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<Phase>);

impl Schedule {
    pub fn constant(epochs: usize, lr: f64) -> Self {
        Self(vec![Phase { epochs, lr }])
    }

    pub fn total_epochs(&self) -> usize {
        self.0.iter().map(|p| p.epochs).sum()
    }

    /// Learning rate of epoch `epoch` (zero-based).
    pub fn lr_at(&self, epoch: usize) -> Option<f64> {
        let mut start = 0;
        for p in &self.0 {
            if epoch < start + p.epochs {
                return Some(p.lr);
            }
            start += p.epochs;
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Config("schedule must not be empty".into()));
        }
        if let Some(p) = self.0.iter().find(|p| !(p.lr > 0.0) || !p.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} is not a positive number",
                p.lr
            )));
        }
        Ok(())
    }

    /// Every phase shortened by `factor`, keeping at least one epoch.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(
            self.0
                .iter()
                .map(|p| Phase {
                    epochs: ((p.epochs as f64 * factor).round() as usize).max(1),
                    lr: p.lr,
                })
                .collect(),
        )
    }
}

/// A loss over a flat parameter vector.
pub trait Objective {
    fn labels(&self) -> Vec<String>;

    /// Total loss, per-term values and gradient at `params`.
    fn evaluate(&self, params: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)>;
}

/// Energy functional over every network of a spec, parameters concatenated
/// in network order.
#[derive(Debug, Clone)]
pub struct EnergyObjective {
    pub compiled: Compiled,
}

impl EnergyObjective {
    pub fn new(spec: &EnergySpec, plan: &SamplePlan) -> Result<Self> {
        Ok(Self {
            compiled: Compiled::new(spec, plan)?,
        })
    }
}

impl Objective for EnergyObjective {
    fn labels(&self) -> Vec<String> {
        self.compiled.labels().to_vec()
    }

    fn evaluate(&self, params: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let sets = self.compiled.split(params)?;
        let e = self.compiled.value_and_grad(&sets)?;
        let grad = e.grads.unwrap_or_default().concat();
        Ok((e.total, e.terms, grad))
    }
}

/// Xavier initialization of every network of a spec; network `i` uses seed
/// `seed + i`.
pub fn init_networks(spec: &EnergySpec, seed: u64) -> Vec<ParamSet> {
    spec.networks
        .iter()
        .enumerate()
        .map(|(i, n)| init_xavier(n.config, seed.wrapping_add(i as u64)))
        .collect()
}

pub fn flatten(sets: &[ParamSet]) -> Vec<f64> {
    sets.iter().flat_map(|s| s.params.iter().copied()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub total: f64,
    pub terms: Vec<f64>,
}

/// Loss per epoch, evaluated before that epoch's update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub labels: Vec<String>,
    pub rows: Vec<HistoryRow>,
}

impl History {
    /// CSV with header `epoch,total_loss,term_0,...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["epoch".to_string(), "total_loss".to_string()];
        header.extend((0..self.labels.len()).map(|i| format!("term_{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.epoch.to_string(), r.total.to_string()];
            rec.extend(r.terms.iter().map(|t| t.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn last_total(&self) -> Option<f64> {
        self.rows.last().map(|r| r.total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Completed,
    /// The loss or its gradient stopped being finite at `epoch`.
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: Vec<f64>,
    pub history: History,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub schedule: Schedule,
    pub adam: AdamConfig,
}

/// Runs the schedule from `init`. `on_epoch` is called after every update
/// with the one-based epoch count and the current parameters.
pub fn train(
    objective: &dyn Objective,
    init: Vec<f64>,
    options: &TrainOptions,
    mut on_epoch: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<TrainResult> {
    options.schedule.validate()?;
    let mut params = init;
    let mut state = AdamState::new(params.len(), options.adam);
    let mut history = History {
        labels: objective.labels(),
        rows: Vec::with_capacity(options.schedule.total_epochs()),
    };
    let mut outcome = Outcome::Completed;
    for epoch in 0..options.schedule.total_epochs() {
        let lr = options.schedule.lr_at(epoch).expect("epoch within schedule");
        let (total, terms, grad) = objective.evaluate(&params)?;
        history.rows.push(HistoryRow { epoch, total, terms });
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            outcome = Outcome::Diverged { epoch, loss: total };
            break;
        }
        adam_step(&mut state, &mut params, &grad, lr)?;
        on_epoch(epoch + 1, &params)?;
    }
    Ok(TrainResult {
        params,
        history,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_value() {
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut p = [0.0];
        adam_step(&mut s, &mut p, &[1.0], 1e-3).unwrap();
        assert!((p[0] + 9.99999995e-4).abs() < 1e-12);
        let (m, v) = s.corrected(0);
        assert!((m - 1.0).abs() < 1e-15 && (v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn schedule_lookup() {
        let s = Schedule(vec![Phase { epochs: 2, lr: 1e-3 }, Phase { epochs: 1, lr: 1e-4 }]);
        assert_eq!(s.total_epochs(), 3);
        assert_eq!(s.lr_at(1), Some(1e-3));
        assert_eq!(s.lr_at(2), Some(1e-4));
        assert_eq!(s.lr_at(3), None);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut p = [0.0];
        assert!(adam_step(&mut s, &mut p, &[f64::NAN], 1e-3).is_err());
        assert_eq!(s.step, 0);
    }
}
