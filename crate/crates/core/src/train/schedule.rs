use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Warm-up followed by piecewise-constant decay.
///
/// Steps before `warmup_steps` use `warmup_lr`. After that the rate is
/// `base_lr`, multiplied by `decay_factor` at every boundary except the last;
/// from the last boundary on it is `final_lr`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub warmup_lr: f64,
    pub base_lr: f64,
    pub final_lr: f64,
    pub boundaries: Vec<usize>,
    pub decay_factor: f64,
}

impl Schedule {
    /// 5% warm-up at `0.01`, then `0.1`, `×0.1` at 50%, and `1e-4` from 75%.
    pub fn standard(total_steps: usize) -> Result<Self> {
        Self::scaled(total_steps, 0.01, 0.1, 1e-4)
    }

    pub fn scaled(total_steps: usize, warmup_lr: f64, base_lr: f64, final_lr: f64) -> Result<Self> {
        let s = Self {
            total_steps,
            warmup_steps: total_steps.div_ceil(20),
            warmup_lr,
            base_lr,
            final_lr,
            boundaries: vec![total_steps / 2, total_steps * 3 / 4],
            decay_factor: 0.1,
        };
        s.validate()?;
        Ok(s)
    }

    /// A single rate for every step.
    pub fn constant(total_steps: usize, lr: f64) -> Self {
        Self {
            total_steps,
            warmup_steps: 0,
            warmup_lr: lr,
            base_lr: lr,
            final_lr: lr,
            boundaries: Vec::new(),
            decay_factor: 1.0,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.total_steps == 0 {
            errs.push("schedule needs at least one step".into());
        }
        let rates = [self.warmup_lr, self.base_lr, self.final_lr, self.decay_factor];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            errs.push("learning rates and decay factor must be finite and non-negative".into());
        }
        if self.warmup_steps > 0 && !(self.warmup_lr < self.base_lr) {
            errs.push(format!(
                "warm-up rate {} must be below the base rate {}",
                self.warmup_lr, self.base_lr
            ));
        }
        if self.final_lr > self.base_lr {
            errs.push(format!(
                "final rate {} exceeds the base rate {}",
                self.final_lr, self.base_lr
            ));
        }
        if self.warmup_steps >= self.total_steps && self.total_steps > 0 {
            errs.push("warm-up must end before the last step".into());
        }
        let mut prev = self.warmup_steps;
        for &b in &self.boundaries {
            if b <= prev || b >= self.total_steps {
                errs.push(format!(
                    "decay boundaries {:?} must increase strictly after warm-up ({}) and stay below {}",
                    self.boundaries, self.warmup_steps, self.total_steps
                ));
                break;
            }
            prev = b;
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigViolations(errs))
        }
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step >= self.total_steps {
            return Err(Error::Schedule {
                step,
                total: self.total_steps,
            });
        }
        if step < self.warmup_steps {
            return Ok(self.warmup_lr);
        }
        let passed = self.boundaries.iter().filter(|&&b| step >= b).count();
        Ok(if passed == 0 {
            self.base_lr
        } else if passed == self.boundaries.len() {
            self.final_lr
        } else {
            self.base_lr * self.decay_factor.powi(passed as i32)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_trajectory() {
        let s = Schedule::standard(2000).unwrap();
        assert_eq!(s.warmup_steps, 100);
        assert_eq!(s.lr_at(0).unwrap(), 0.01);
        assert_eq!(s.lr_at(99).unwrap(), 0.01);
        assert_eq!(s.lr_at(100).unwrap(), 0.1);
        assert!((s.lr_at(1000).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(s.lr_at(1500).unwrap(), 1e-4);
        assert_eq!(s.lr_at(1999).unwrap(), 1e-4);
        assert!(matches!(s.lr_at(2000), Err(Error::Schedule { step: 2000, total: 2000 })));
    }

    #[test]
    fn invalid_boundaries() {
        let mut s = Schedule::standard(100).unwrap();
        s.boundaries = vec![80, 60];
        assert!(s.validate().is_err());
        s.boundaries = vec![2];
        assert!(s.validate().is_err());
    }
}
