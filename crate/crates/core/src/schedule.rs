//! Training schedules: linear warmup/decay learning rate and geometric
//! temperature annealing. Both are pure functions of the step index, so
//! resuming from a checkpoint needs no schedule state.

use crate::error::{CoreError, Result};

/// Piecewise-linear learning rate: 0 at step 0, `peak_lr` at
/// `warmup_steps`, back to 0 at `total_steps` and beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(warmup_steps: u64, peak_lr: f64, total_steps: u64) -> Result<Self> {
        if warmup_steps == 0 {
            return Err(CoreError::InvalidSchedule(
                "warmup_steps must be positive".into(),
            ));
        }
        if total_steps <= warmup_steps {
            return Err(CoreError::InvalidSchedule(format!(
                "total_steps ({total_steps}) must exceed warmup_steps ({warmup_steps})"
            )));
        }
        if !(peak_lr > 0.0) {
            return Err(CoreError::InvalidSchedule("peak_lr must be positive".into()));
        }
        Ok(LrSchedule {
            warmup_steps,
            peak_lr,
            total_steps,
        })
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step <= self.warmup_steps {
            self.peak_lr * step as f64 / self.warmup_steps as f64
        } else if step < self.total_steps {
            self.peak_lr * (self.total_steps - step) as f64
                / (self.total_steps - self.warmup_steps) as f64
        } else {
            0.0
        }
    }
}

/// Geometric temperature decay clamped at a floor:
/// `tau(n) = max(floor, start * decay^n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub floor: f64,
    pub decay: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            start: 2.0,
            floor: 0.5,
            decay: 0.999995,
        }
    }
}

impl TemperatureSchedule {
    pub fn new(start: f64, floor: f64, decay: f64) -> Result<Self> {
        if !(start > 0.0 && floor > 0.0 && floor <= start) {
            return Err(CoreError::InvalidSchedule(
                "temperature start/floor must be positive with floor <= start".into(),
            ));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(CoreError::InvalidSchedule(
                "temperature decay must be in (0, 1)".into(),
            ));
        }
        Ok(TemperatureSchedule { start, floor, decay })
    }

    pub fn temperature_at(&self, step: u64) -> f64 {
        let n = i32::try_from(step.min(i32::MAX as u64)).expect("step fits i32");
        let tau = self.start * self.decay.powi(n);
        tau.max(self.floor)
    }
}
