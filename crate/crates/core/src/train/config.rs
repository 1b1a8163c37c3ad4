use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Momentum update convention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `v ← θ1·v − ε(g + θ2·w)`, `w ← w + v`.
    #[default]
    Standard,
    /// `Δ ← ε·g − θ1·Δ + θ2·ε·w`, `w ← w − Δ`, exactly as printed.
    Literal,
}

/// Optimizer, schedule and loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// ε_b.
    pub base_lr: f64,
    /// γ.
    pub gamma: f64,
    /// N, iterations between learning-rate drops.
    pub step: usize,
    /// θ1.
    pub momentum: f64,
    /// θ2.
    pub decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub update_rule: UpdateRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.001,
            gamma: 0.5,
            step: 1000,
            momentum: 0.95,
            decay: 0.005,
            batch_size: 64,
            epochs: 10,
            eval_every: 1000,
            seed: 0,
            update_rule: UpdateRule::Standard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.step == 0 {
            return bad("step must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad(format!("decay must be non-negative, got {}", self.decay));
        }
        if self.batch_size < 2 {
            return bad(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            ));
        }
        if self.epochs == 0 || self.eval_every == 0 {
            return bad("epochs and eval_every must be positive".into());
        }
        Ok(())
    }
}

/// Step schedule `ε = ε_b · γ^⌊α/N⌋`.
pub fn lr_at(iteration: usize, cfg: &TrainConfig) -> f64 {
    let drops = (iteration / cfg.step) as i32;
    cfg.base_lr * cfg.gamma.powi(drops)
}

/// Optimizer steps in one pass over `samples` with full batches.
pub fn iterations_per_epoch(samples: usize, batch_size: usize) -> usize {
    samples.div_ceil(batch_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_and_schedule() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(lr_at(0, &cfg), 0.001);
        assert_eq!(lr_at(999, &cfg), 0.001);
        assert_eq!(lr_at(1000, &cfg), 0.0005);
        assert_eq!(lr_at(2500, &cfg), 0.00025);
    }

    #[test]
    fn cadence() {
        assert_eq!(iterations_per_epoch(116_288, 64), 1817);
        assert_eq!(iterations_per_epoch(3000, 64), 47);
        assert_eq!(iterations_per_epoch(64, 64), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = TrainConfig::default();
        for cfg in [
            TrainConfig { batch_size: 1, ..base.clone() },
            TrainConfig { gamma: 1.5, ..base.clone() },
            TrainConfig { gamma: 0.0, ..base.clone() },
            TrainConfig { base_lr: -1.0, ..base.clone() },
            TrainConfig { step: 0, ..base.clone() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn schedule_is_monotone_and_periodic(a in 0usize..100_000, step in 1usize..5000, gamma in 0.05f64..1.0) {
            let cfg = TrainConfig { step, gamma, ..TrainConfig::default() };
            prop_assert!(lr_at(a + 1, &cfg) <= lr_at(a, &cfg));
            let start = (a / step) * step;
            prop_assert_eq!(lr_at(a, &cfg), lr_at(start, &cfg));
        }
    }
}
