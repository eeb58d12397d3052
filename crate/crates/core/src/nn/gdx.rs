//! Gradient descent with momentum and a variable learning rate.
//!
//! The rate grows by `lr_increase` after an improving step and a proposed
//! step is abandoned entirely (velocity zeroed, rate cut by `lr_decrease`)
//! when the current loss has blown up past `max_loss_increase_ratio` times
//! the last accepted loss. Training halts once the rate underflows.

use crate::error::{Error, Result};

const LR_FLOOR: f64 = 1e-12;

/// Optimizer hyperparameters. Defaults are the conventional constants for
/// this adaptive-rate scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct GdxConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub lr_increase: f64,
    pub lr_decrease: f64,
    pub max_loss_increase_ratio: f64,
}

impl Default for GdxConfig {
    fn default() -> Self {
        GdxConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            lr_increase: 1.05,
            lr_decrease: 0.7,
            max_loss_increase_ratio: 1.04,
        }
    }
}

impl GdxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if self.lr_increase <= 1.0 {
            return Err(Error::invalid("lr_increase must be > 1"));
        }
        if !(0.0..1.0).contains(&self.lr_decrease) || self.lr_decrease == 0.0 {
            return Err(Error::invalid("lr_decrease must be in (0, 1)"));
        }
        if self.max_loss_increase_ratio <= 1.0 {
            return Err(Error::invalid("max_loss_increase_ratio must be > 1"));
        }
        Ok(())
    }
}

/// What a call to [`GdxState::step`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
}

/// Mutable optimizer state: the current rate and per-parameter velocities
/// (shapes mirror the parameter shapes).
#[derive(Debug, Clone)]
pub struct GdxState {
    config: GdxConfig,
    learning_rate: f64,
    velocity: Vec<Vec<f64>>,
}

impl GdxState {
    pub fn new(config: GdxConfig) -> Result<Self> {
        config.validate()?;
        Ok(GdxState {
            learning_rate: config.learning_rate,
            config,
            velocity: Vec::new(),
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// One optimizer step.
    ///
    /// `loss_now` is the loss at the current parameters, `loss_prev` the
    /// loss at the previous accepted step (`f64::INFINITY` on the first).
    /// If the loss has grown past the allowed ratio the step is rejected:
    /// parameters are left untouched, velocity is zeroed and the rate is
    /// cut. Otherwise `velocity = momentum * velocity - lr * grad` is
    /// applied and the rate grows if the loss improved.
    pub fn step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[Vec<f64>],
        loss_now: f64,
        loss_prev: f64,
    ) -> Result<StepOutcome> {
        if params.len() != grads.len() {
            return Err(Error::invalid(format!(
                "{} parameter tensors vs {} gradient tensors",
                params.len(),
                grads.len()
            )));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.velocity.len() != params.len()
            || self.velocity.iter().zip(params.iter()).any(|(v, p)| v.len() != p.len())
        {
            return Err(Error::invalid("velocity shapes do not mirror parameter shapes"));
        }

        if loss_now > self.config.max_loss_increase_ratio * loss_prev {
            for v in &mut self.velocity {
                v.fill(0.0);
            }
            self.learning_rate *= self.config.lr_decrease;
            if self.learning_rate < LR_FLOOR {
                return Err(Error::LearningRateCollapsed);
            }
            return Ok(StepOutcome::Rejected);
        }

        let lr = self.learning_rate;
        let m = self.config.momentum;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if p.len() != g.len() {
                return Err(Error::invalid("gradient shape does not mirror parameter shape"));
            }
            for i in 0..p.len() {
                v[i] = m * v[i] - lr * g[i];
                p[i] += v[i];
            }
        }
        if loss_now < loss_prev {
            self.learning_rate *= self.config.lr_increase;
        }
        Ok(StepOutcome::Accepted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(momentum: f64) -> GdxState {
        GdxState::new(GdxConfig {
            learning_rate: 0.1,
            momentum,
            ..GdxConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn plain_step_without_momentum() {
        let mut s = state(0.0);
        let mut p = vec![1.0, -2.0];
        let g = vec![vec![0.5, -1.0]];
        let mut refs: Vec<&mut [f64]> = vec![&mut p];
        let out = s.step(&mut refs, &g, 1.0, f64::INFINITY).unwrap();
        assert_eq!(out, StepOutcome::Accepted);
        assert!((p[0] - (1.0 - 0.1 * 0.5)).abs() < 1e-15);
        assert!((p[1] - (-2.0 + 0.1)).abs() < 1e-15);
        // improving loss (anything beats +inf) grows the rate
        assert!((s.learning_rate() - 0.1 * 1.05).abs() < 1e-15);
    }

    #[test]
    fn blowup_rejects_and_cuts_rate() {
        let mut s = state(0.9);
        let mut p = vec![1.0];
        // seed a velocity
        {
            let mut refs: Vec<&mut [f64]> = vec![&mut p];
            s.step(&mut refs, &[vec![1.0]], 1.0, f64::INFINITY).unwrap();
        }
        let before = p.clone();
        let lr_before = s.learning_rate();
        let mut refs: Vec<&mut [f64]> = vec![&mut p];
        let out = s.step(&mut refs, &[vec![1.0]], 2.0, 1.0).unwrap();
        assert_eq!(out, StepOutcome::Rejected);
        assert_eq!(p, before);
        assert!((s.learning_rate() - lr_before * 0.7).abs() < 1e-15);
        assert!(s.velocity.iter().all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn two_improving_steps_match_hand_unrolled_recurrence() {
        let mut s = state(0.9);
        let mut p = vec![1.0];
        let g1 = 0.5;
        let g2 = 0.25;
        {
            let mut refs: Vec<&mut [f64]> = vec![&mut p];
            s.step(&mut refs, &[vec![g1]], 1.0, f64::INFINITY).unwrap();
        }
        {
            let mut refs: Vec<&mut [f64]> = vec![&mut p];
            s.step(&mut refs, &[vec![g2]], 0.5, 1.0).unwrap();
        }
        // v1 = -lr0 g1, p1 = 1 + v1, lr1 = lr0 * 1.05
        // v2 = 0.9 v1 - lr1 g2, p2 = p1 + v2
        let lr0 = 0.1;
        let v1 = -lr0 * g1;
        let p1 = 1.0 + v1;
        let lr1 = lr0 * 1.05;
        let v2 = 0.9 * v1 - lr1 * g2;
        let want = p1 + v2;
        assert!((p[0] - want).abs() < 1e-15, "got {}, want {want}", p[0]);
    }

    #[test]
    fn repeated_rejection_collapses_rate() {
        let mut s = state(0.0);
        let mut p = vec![0.0];
        let mut err = None;
        for _ in 0..200 {
            let mut refs: Vec<&mut [f64]> = vec![&mut p];
            match s.step(&mut refs, &[vec![0.0]], 10.0, 1.0) {
                Ok(StepOutcome::Rejected) => continue,
                Ok(StepOutcome::Accepted) => panic!("blowup must not be accepted"),
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        assert!(matches!(err, Some(Error::LearningRateCollapsed)));
    }

    #[test]
    fn config_validation() {
        assert!(GdxConfig { momentum: 1.0, ..GdxConfig::default() }.validate().is_err());
        assert!(GdxConfig { learning_rate: 0.0, ..GdxConfig::default() }.validate().is_err());
        assert!(GdxConfig { lr_decrease: 1.0, ..GdxConfig::default() }.validate().is_err());
        assert!(GdxConfig::default().validate().is_ok());
    }
}
