//! Step rules and the two per-batch update loops.
//!
//! A single step clips the gradient to a maximum ℓ2 norm, scales the base
//! learning rate by a linear warm-up, and applies SGD or Adam. On top of it:
//!
//! * [`online_gd_update`] takes a fixed number `K` of steps on the training set;
//! * [`congrad_update`] generates the iterates after `0..=K` steps and keeps
//!   the one with the lowest loss on the validation residents, rolling the
//!   optimizer state back to the state that produced it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Model, ParamVec};
use crate::streams::Event;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    Sgd,
    Adam,
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepRule::Sgd => "sgd",
            StepRule::Adam => "adam",
        })
    }
}

impl FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(StepRule::Sgd),
            "adam" => Ok(StepRule::Adam),
            other => Err(Error::Config(format!(
                "unknown step rule `{other}` (expected sgd or adam)"
            ))),
        }
    }
}

/// Which per-batch update loop the learner runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    OnlineGd,
    Congrad,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::OnlineGd => "online-gd",
            Optimizer::Congrad => "congrad",
        })
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online-gd" => Ok(Optimizer::OnlineGd),
            "congrad" => Ok(Optimizer::Congrad),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected online-gd or congrad)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub rule: StepRule,
    pub lr: f64,
    /// Steps over which the learning rate ramps linearly from 0; 0 disables.
    pub warmup: u64,
    /// Maximum gradient ℓ2 norm; `None` disables clipping.
    pub clip: Option<f64>,
    /// Steps per batch (the maximum for the validation-selected loop).
    pub k: usize,
    /// Stop stepping once the gradient norm falls to this value.
    pub stop_tolerance: Option<f64>,
    /// Whether the validation-selected loop may keep the un-updated model.
    pub include_zero: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            rule: StepRule::Adam,
            lr: 2.5e-4,
            warmup: 2000,
            clip: Some(0.25),
            k: 1,
            stop_tolerance: None,
            include_zero: true,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimConfig {
            rule: StepRule::Sgd,
            lr,
            warmup: 0,
            clip: None,
            ..Default::default()
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip threshold must be positive, got {c}")));
            }
        }
        if let Some(d) = self.stop_tolerance {
            if !(d >= 0.0) {
                return Err(Error::Config(format!("stop tolerance must be non-negative, got {d}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config(
                "Adam betas must lie in [0, 1) and eps be positive".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate for the `step`-th optimizer step (1-based).
    pub fn effective_lr(&self, step: u64) -> f64 {
        if self.warmup == 0 {
            self.lr
        } else {
            self.lr * (step as f64 / self.warmup as f64).min(1.0)
        }
    }
}

/// Adam moments and the global step counter (also used for SGD warm-up).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ParamVec,
    pub v: ParamVec,
    pub step: u64,
}

impl AdamState {
    pub fn new(shared_len: usize) -> Self {
        AdamState {
            m: ParamVec::new(vec![0.0; shared_len]),
            v: ParamVec::new(vec![0.0; shared_len]),
            step: 0,
        }
    }
}

/// Anything the step rules can move.
pub trait Parameters {
    /// `θ += alpha * delta`.
    fn add_scaled(&mut self, alpha: f64, delta: &ParamVec) -> Result<()>;
}

impl Parameters for Model {
    fn add_scaled(&mut self, alpha: f64, delta: &ParamVec) -> Result<()> {
        Model::add_scaled(self, alpha, delta)
    }
}

impl Parameters for ParamVec {
    fn add_scaled(&mut self, alpha: f64, delta: &ParamVec) -> Result<()> {
        if delta.shared.len() != self.shared.len() {
            return Err(Error::Shape(format!(
                "update has {} values, parameters have {}",
                delta.shared.len(),
                self.shared.len()
            )));
        }
        self.axpy(alpha, delta);
        Ok(())
    }
}

/// Rescales `g` in place so that its norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_gradient(g: &mut ParamVec, max_norm: f64) -> f64 {
    let norm = g.norm();
    if norm > max_norm {
        g.scale(max_norm / norm);
    }
    norm
}

/// One clipped, warmed-up SGD or Adam step. Advances `state`.
pub fn clipped_step<P: Parameters + ?Sized>(
    params: &mut P,
    mut grad: ParamVec,
    state: &mut AdamState,
    cfg: &OptimConfig,
) -> Result<()> {
    if !grad.is_finite() {
        return Err(Error::Numeric("gradient".into()));
    }
    if let Some(c) = cfg.clip {
        clip_gradient(&mut grad, c);
    }
    state.step += 1;
    let lr = cfg.effective_lr(state.step);
    match cfg.rule {
        StepRule::Sgd => params.add_scaled(-lr, &grad),
        StepRule::Adam => {
            let (b1, b2) = (cfg.beta1, cfg.beta2);
            let c1 = 1.0 - b1.powf(state.step as f64);
            let c2 = 1.0 - b2.powf(state.step as f64);
            let mut delta = grad;
            adam_moments(&mut delta.shared, &mut state.m.shared, &mut state.v.shared, cfg, c1, c2);
            for (u, g) in delta.users.iter_mut() {
                let m = state.m.users.entry(*u).or_insert_with(|| vec![0.0; g.len()]);
                let v = state.v.users.entry(*u).or_insert_with(|| vec![0.0; g.len()]);
                adam_moments(g, m, v, cfg, c1, c2);
            }
            params.add_scaled(-lr, &delta)
        }
    }
}

/// Updates the moments and overwrites `g` with the bias-corrected direction.
fn adam_moments(g: &mut [f64], m: &mut [f64], v: &mut [f64], cfg: &OptimConfig, c1: f64, c2: f64) {
    for ((gi, mi), vi) in g.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * *gi;
        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * *gi * *gi;
        *gi = (*mi / c1) / ((*vi / c2).sqrt() + cfg.eps);
    }
}

/// Loss and gradient of a training objective at the current model.
pub trait Objective {
    fn loss_and_grad(&mut self, model: &Model) -> Result<(f64, ParamVec)>;
}

impl<F> Objective for F
where
    F: FnMut(&Model) -> Result<(f64, ParamVec)>,
{
    fn loss_and_grad(&mut self, model: &Model) -> Result<(f64, ParamVec)> {
        self(model)
    }
}

/// Mean cross-entropy over a fixed batch.
pub struct BatchObjective<'a>(pub &'a [Event]);

impl Objective for BatchObjective<'_> {
    fn loss_and_grad(&mut self, model: &Model) -> Result<(f64, ParamVec)> {
        model.loss_and_grad(self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    /// Steps whose result was kept.
    pub chosen_k: usize,
    /// Steps actually taken (≤ K; fewer only when the stop tolerance triggers).
    pub steps_taken: usize,
    /// Validation loss of each candidate, index = number of steps. Empty
    /// when no validation data was available.
    pub validation_losses: Vec<f64>,
}

/// `K` clipped steps on the objective, stopping early only if the gradient
/// norm reaches the configured tolerance.
pub fn online_gd_update<O: Objective + ?Sized>(
    model: &mut Model,
    objective: &mut O,
    cfg: &OptimConfig,
    state: &mut AdamState,
) -> Result<UpdateOutcome> {
    let mut taken = 0;
    for _ in 0..cfg.k {
        let (_, g) = objective.loss_and_grad(model)?;
        if cfg.stop_tolerance.is_some_and(|d| g.norm() <= d) {
            break;
        }
        clipped_step(model, g, state, cfg)?;
        taken += 1;
    }
    Ok(UpdateOutcome {
        chosen_k: taken,
        steps_taken: taken,
        validation_losses: Vec::new(),
    })
}

/// Validation-selected number of steps.
///
/// Builds the iterates after `0..=K` steps (or `1..=K` when
/// `cfg.include_zero` is false), scores each on `validation`, and leaves the
/// model and optimizer state at the best one; ties keep the fewest steps.
/// With no validation data this is exactly [`online_gd_update`].
pub fn congrad_update<O: Objective + ?Sized>(
    model: &mut Model,
    objective: &mut O,
    validation: &[Event],
    cfg: &OptimConfig,
    state: &mut AdamState,
) -> Result<UpdateOutcome> {
    if validation.is_empty() {
        return online_gd_update(model, objective, cfg, state);
    }
    let score = |m: &Model| -> Result<f64> {
        let loss = m.loss(validation)?;
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::Numeric("validation loss".into()))
        }
    };
    let mut losses = Vec::with_capacity(cfg.k + 1);
    let mut best: Option<(f64, usize, Model, AdamState)> = None;
    if cfg.include_zero {
        let l0 = score(model)?;
        losses.push(l0);
        best = Some((l0, 0, model.clone(), state.clone()));
    } else {
        losses.push(f64::NAN);
    }
    let mut taken = 0;
    for k in 1..=cfg.k {
        let (_, g) = objective.loss_and_grad(model)?;
        if cfg.stop_tolerance.is_some_and(|d| g.norm() <= d) {
            break;
        }
        clipped_step(model, g, state, cfg)?;
        taken = k;
        let l = score(model)?;
        losses.push(l);
        if best.as_ref().is_none_or(|(b, ..)| l < *b) {
            best = Some((l, k, model.clone(), state.clone()));
        }
    }
    let Some((_, chosen_k, best_model, best_state)) = best else {
        // Only reachable with include_zero off and an immediate stop.
        return Ok(UpdateOutcome {
            chosen_k: 0,
            steps_taken: 0,
            validation_losses: losses,
        });
    };
    *model = best_model;
    *state = best_state;
    Ok(UpdateOutcome {
        chosen_k,
        steps_taken: taken,
        validation_losses: losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_halves_norm_half_gradient() {
        let mut g = ParamVec::new(vec![0.3, 0.4]);
        let before = clip_gradient(&mut g, 0.25);
        assert_eq!(before, 0.5);
        assert!((g.shared[0] - 0.15).abs() < 1e-15 && (g.shared[1] - 0.2).abs() < 1e-15);
        let mut small = ParamVec::new(vec![0.1]);
        clip_gradient(&mut small, 0.25);
        assert_eq!(small.shared, vec![0.1]);
    }

    #[test]
    fn warmup_is_linear_then_flat() {
        let cfg = OptimConfig {
            lr: 2.5e-4,
            warmup: 2000,
            ..Default::default()
        };
        assert_eq!(cfg.effective_lr(1000), 0.5 * 2.5e-4);
        assert_eq!(cfg.effective_lr(2000), 2.5e-4);
        assert_eq!(cfg.effective_lr(5000), 2.5e-4);
        assert_eq!(OptimConfig { warmup: 0, ..cfg }.effective_lr(1), 2.5e-4);
    }

    #[test]
    fn one_adam_step_closed_form() {
        // m = 0.1, v = 0.001; corrected: m̂ = 1, v̂ = 1; step = lr / (1 + eps).
        let cfg = OptimConfig {
            lr: 0.01,
            warmup: 0,
            clip: None,
            ..Default::default()
        };
        let mut theta = ParamVec::new(vec![0.0]);
        let mut state = AdamState::new(1);
        clipped_step(&mut theta, ParamVec::new(vec![1.0]), &mut state, &cfg).unwrap();
        let m_hat = (1.0 - 0.9) * 1.0 / (1.0 - 0.9);
        let v_hat = (1.0 - 0.999) * 1.0 / (1.0 - 0.999);
        let expected = -0.01 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!(
            (theta.shared[0] - expected).abs() < 1e-17,
            "{} vs {expected}",
            theta.shared[0]
        );
        assert_eq!(state.step, 1);
        assert!((state.m.shared[0] - 0.1).abs() < 1e-15);
        assert!((state.v.shared[0] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_uses_clipped_gradient() {
        let cfg = OptimConfig {
            clip: Some(0.25),
            ..OptimConfig::sgd(1.0)
        };
        let mut theta = ParamVec::new(vec![1.0, 1.0]);
        let mut state = AdamState::new(2);
        clipped_step(&mut theta, ParamVec::new(vec![0.3, 0.4]), &mut state, &cfg).unwrap();
        assert!((theta.shared[0] - 0.85).abs() < 1e-15);
        assert!((theta.shared[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let cfg = OptimConfig::sgd(0.1);
        let mut theta = ParamVec::new(vec![0.0]);
        let err = clipped_step(&mut theta, ParamVec::new(vec![f64::NAN]), &mut AdamState::new(1), &cfg);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn user_moments_created_lazily() {
        let cfg = OptimConfig {
            warmup: 0,
            clip: None,
            ..Default::default()
        };
        let mut theta = ParamVec::new(vec![0.0]);
        theta.users.insert(4, vec![0.0, 0.0]);
        let mut g = ParamVec::new(vec![1.0]);
        g.users.insert(4, vec![1.0, -1.0]);
        let mut state = AdamState::new(1);
        clipped_step(&mut theta, g, &mut state, &cfg).unwrap();
        assert_eq!(state.m.users[&4].len(), 2);
        assert!(theta.users[&4][0] < 0.0 && theta.users[&4][1] > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(OptimConfig::default().validate().is_ok());
        assert!(OptimConfig {
            k: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimConfig {
            lr: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimConfig {
            clip: Some(-1.0),
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
