//! Learning-rate schedules.
//!
//! Steps are 1-based: `eval_lr(spec, 1)` is the rate used by the first
//! optimizer update and `eval_lr(spec, total_steps)` the rate of the last.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    LinearDecay,
    CosineWithWarmup,
    PiecewiseLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    #[serde(default)]
    pub warmup_steps: u64,
    pub peak_lr: f64,
    #[serde(default)]
    pub final_lr: f64,
    pub total_steps: u64,
    /// `(step, lr)` pairs, strictly increasing in step. Only read for
    /// [`ScheduleKind::PiecewiseLinear`]; the rate is held flat outside the
    /// first and last knot.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub knots: Vec<(u64, f64)>,
}

impl ScheduleSpec {
    pub fn constant(lr: f64, total_steps: u64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Constant,
            warmup_steps: 0,
            peak_lr: lr,
            final_lr: lr,
            total_steps,
            knots: Vec::new(),
        }
    }

    pub fn cosine(warmup_steps: u64, peak_lr: f64, final_lr: f64, total_steps: u64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::CosineWithWarmup,
            warmup_steps,
            peak_lr,
            final_lr,
            total_steps,
            knots: Vec::new(),
        }
    }

    pub fn linear_decay(warmup_steps: u64, peak_lr: f64, final_lr: f64, total_steps: u64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::LinearDecay,
            warmup_steps,
            peak_lr,
            final_lr,
            total_steps,
            knots: Vec::new(),
        }
    }

    /// Builds a piecewise-linear schedule; `peak_lr`/`final_lr` are derived
    /// from the knots.
    pub fn piecewise(knots: Vec<(u64, f64)>, total_steps: u64) -> Self {
        let peak_lr = knots.iter().map(|k| k.1).fold(0.0, f64::max);
        let final_lr = knots.last().map(|k| k.1).unwrap_or(0.0);
        ScheduleSpec {
            kind: ScheduleKind::PiecewiseLinear,
            warmup_steps: 0,
            peak_lr,
            final_lr: final_lr.min(peak_lr),
            total_steps,
            knots,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("schedule total_steps must be >= 1".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(Error::Config(format!("peak_lr must be > 0, got {}", self.peak_lr)));
        }
        if !(self.final_lr.is_finite() && self.final_lr >= 0.0) {
            return Err(Error::Config(format!("final_lr must be >= 0, got {}", self.final_lr)));
        }
        if self.final_lr > self.peak_lr {
            return Err(Error::Config(format!(
                "final_lr {} exceeds peak_lr {}",
                self.final_lr, self.peak_lr
            )));
        }
        if self.kind == ScheduleKind::PiecewiseLinear {
            if self.knots.is_empty() {
                return Err(Error::Config("piecewise-linear schedule needs at least one knot".into()));
            }
            for pair in self.knots.windows(2) {
                if pair[1].0 <= pair[0].0 {
                    return Err(Error::Config(format!(
                        "knot steps must be strictly increasing ({} then {})",
                        pair[0].0, pair[1].0
                    )));
                }
            }
            if let Some(&(step, lr)) = self.knots.iter().find(|k| !(k.1.is_finite() && k.1 >= 0.0)) {
                return Err(Error::Config(format!("knot at step {step} has invalid lr {lr}")));
            }
        }
        Ok(())
    }

    /// Learning rate at a 1-based step.
    pub fn eval_lr(&self, step: u64) -> Result<f64> {
        if step == 0 || step > self.total_steps {
            return Err(Error::range(
                "step",
                format!("{step} not in 1..={}", self.total_steps),
            ));
        }
        Ok(self.lr_unchecked(step))
    }

    fn lr_unchecked(&self, step: u64) -> f64 {
        match self.kind {
            ScheduleKind::PiecewiseLinear => interpolate(&self.knots, step),
            _ if step <= self.warmup_steps => {
                self.peak_lr * step as f64 / self.warmup_steps as f64
            }
            ScheduleKind::Constant => self.peak_lr,
            ScheduleKind::LinearDecay => {
                let p = self.decay_progress(step);
                self.peak_lr + (self.final_lr - self.peak_lr) * p
            }
            ScheduleKind::CosineWithWarmup => {
                let p = self.decay_progress(step);
                self.final_lr + (self.peak_lr - self.final_lr) * 0.5 * (1.0 + (PI * p).cos())
            }
        }
    }

    // Fraction of the post-warmup segment completed at `step`, in [0, 1].
    fn decay_progress(&self, step: u64) -> f64 {
        let span = self.total_steps - self.warmup_steps;
        if span == 0 {
            return 1.0;
        }
        (step - self.warmup_steps) as f64 / span as f64
    }

    /// All rates for steps `1..=total_steps`, index `t - 1` holding step `t`.
    pub fn rates(&self) -> Vec<f64> {
        (1..=self.total_steps).map(|t| self.lr_unchecked(t)).collect()
    }
}

fn interpolate(knots: &[(u64, f64)], step: u64) -> f64 {
    let first = knots[0];
    if step <= first.0 {
        return first.1;
    }
    let idx = knots.partition_point(|k| k.0 <= step);
    if idx == knots.len() {
        return knots[idx - 1].1;
    }
    let (s0, l0) = knots[idx - 1];
    let (s1, l1) = knots[idx];
    let frac = (step - s0) as f64 / (s1 - s0) as f64;
    l0 + (l1 - l0) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_schedule() {
        let s = ScheduleSpec::constant(1e-3, 1000);
        assert_eq!(s.eval_lr(500).unwrap(), 1e-3);
    }

    #[test]
    fn warmup_endpoint_is_peak() {
        let s = ScheduleSpec::cosine(100, 1e-3, 0.0, 1100);
        assert_eq!(s.eval_lr(100).unwrap(), 1e-3);
        assert!(s.eval_lr(50).unwrap() < 1e-3);
    }

    #[test]
    fn cosine_midpoint() {
        let s = ScheduleSpec::cosine(0, 1e-3, 0.0, 1000);
        let lr = s.eval_lr(500).unwrap();
        assert!((lr - 5e-4).abs() < 1e-18, "{lr}");
        assert_eq!(s.eval_lr(1000).unwrap(), 0.0);
    }

    #[test]
    fn linear_decay_endpoints() {
        let s = ScheduleSpec::linear_decay(10, 1.0, 0.1, 110);
        assert_eq!(s.eval_lr(10).unwrap(), 1.0);
        assert!((s.eval_lr(60).unwrap() - 0.55).abs() < 1e-15);
        assert!((s.eval_lr(110).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn piecewise_interpolates_and_clamps() {
        let s = ScheduleSpec::piecewise(vec![(10, 1.0), (20, 0.0), (30, 0.5)], 40);
        assert_eq!(s.eval_lr(1).unwrap(), 1.0);
        assert_eq!(s.eval_lr(15).unwrap(), 0.5);
        assert_eq!(s.eval_lr(20).unwrap(), 0.0);
        assert_eq!(s.eval_lr(25).unwrap(), 0.25);
        assert_eq!(s.eval_lr(40).unwrap(), 0.5);
    }

    #[test]
    fn step_out_of_range() {
        let s = ScheduleSpec::constant(1e-3, 10);
        assert!(matches!(s.eval_lr(0), Err(Error::Range { .. })));
        assert!(matches!(s.eval_lr(11), Err(Error::Range { .. })));
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(ScheduleSpec::cosine(20, 1e-3, 0.0, 10).validate().is_err());
        assert!(ScheduleSpec::cosine(0, 1e-3, 2e-3, 10).validate().is_err());
        assert!(ScheduleSpec::piecewise(vec![(5, 1.0), (5, 0.5)], 10).validate().is_err());
        assert!(ScheduleSpec::constant(0.0, 10).validate().is_err());
    }
}
