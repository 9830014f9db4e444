//! Scalar training objectives and the temperature schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Target FLOPs ratio `t`.
    pub target_t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kd_temperature: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub total_steps: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            target_t: 0.5,
            alpha: 10.0,
            beta: 0.5,
            kd_temperature: 4.0,
            tau_start: 5.0,
            tau_end: 0.1,
            total_steps: 100,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_t > 0.0 && self.target_t < 1.0) {
            return Err(Error::invalid(format!("target {} outside (0, 1)", self.target_t)));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("loss weights must be nonnegative"));
        }
        if !(self.kd_temperature > 0.0) {
            return Err(Error::invalid("distillation temperature must be positive"));
        }
        if !(self.tau_end > 0.0 && self.tau_start >= self.tau_end) {
            return Err(Error::invalid("need tau_start >= tau_end > 0"));
        }
        if self.total_steps == 0 {
            return Err(Error::invalid("total_steps must be positive"));
        }
        Ok(())
    }
}

/// `(f_dyn / f_stat - t)^2`.
pub fn flops_loss(f_dyn: f64, f_stat: f64, t: f64) -> Result<f64> {
    if f_stat == 0.0 {
        return Err(Error::DivisionByZero("static FLOPs are zero"));
    }
    let d = f_dyn / f_stat - t;
    Ok(d * d)
}

/// Mean over blocks of the squared distance of each rate outside
/// `[lower, upper]`.
pub fn bounds_loss(rates: &[f64], lower: f64, upper: f64) -> Result<f64> {
    if !(0.0 <= lower && lower <= upper && upper <= 1.0) {
        return Err(Error::invalid(format!("bounds [{lower}, {upper}] not within [0, 1]")));
    }
    if rates.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = rates
        .iter()
        .map(|&r| (lower - r).max(0.0).powi(2) + (r - upper).max(0.0).powi(2))
        .sum();
    Ok(sum / rates.len() as f64)
}

fn log_softmax(logits: &[f64], temp: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|v| v / temp).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    scaled.iter().map(|v| v - lse).collect()
}

/// `T^2 * KL(softmax(s / T) || softmax(t / T))`, computed from
/// log-probabilities. Clamped at zero against rounding.
pub fn kd_loss(student: &[f64], teacher: &[f64], temperature: f64) -> Result<f64> {
    if student.len() != teacher.len() {
        return Err(Error::LengthMismatch {
            left: student.len(),
            right: teacher.len(),
        });
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    if student.is_empty() {
        return Ok(0.0);
    }
    let lp = log_softmax(student, temperature);
    let lq = log_softmax(teacher, temperature);
    let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
    Ok(temperature * temperature * kl.max(0.0))
}

/// `task + alpha * (flops + bounds) + beta * kd`, with the `T^2` factor
/// already inside `kd`.
pub fn total_loss(task: f64, flops: f64, bounds: f64, kd: f64, cfg: &TrainingConfig) -> f64 {
    task + cfg.alpha * (flops + bounds) + cfg.beta * kd
}

/// Exponential decay from `tau_start` at step 0 to `tau_end` at the last step.
pub fn tau_schedule(step: u64, cfg: &TrainingConfig) -> Result<f64> {
    if step > cfg.total_steps {
        return Err(Error::StepOutOfRange {
            step,
            total: cfg.total_steps,
        });
    }
    let frac = step as f64 / cfg.total_steps as f64;
    Ok(cfg.tau_start * (cfg.tau_end / cfg.tau_start).powf(frac))
}
