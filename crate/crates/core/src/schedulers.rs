//! Step-indexed scalar schedules: the α ramp, the half-life-linear β₃ warmup
//! and learning-rate shapes.
//!
//! Steps are 1-based: the value for update `t` is evaluated after the step
//! counter has been incremented to `t`. Every schedule is a pure function of
//! `t`, so resuming never needs more than the step counter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec<F> {
    Constant {
        value: F,
    },
    /// `min(t * value / warmup, value)`.
    LinearWarmupAlpha {
        value: F,
        warmup: u64,
    },
    /// Moves β from `start` to `value` so that its half-life grows linearly.
    Beta3Thalf {
        start: F,
        value: F,
        warmup: u64,
    },
    LrWarmupCosine {
        peak: F,
        floor: F,
        warmup: u64,
        total: u64,
    },
    LrWarmupConstantLinearDecay {
        peak: F,
        floor: F,
        warmup: u64,
        decay_start: u64,
        decay_end: u64,
    },
}

impl<F: Scalar> ScheduleSpec<F> {
    pub fn constant(value: F) -> Self {
        ScheduleSpec::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScheduleSpec::Constant { .. } => Ok(()),
            ScheduleSpec::LinearWarmupAlpha { value, .. } => {
                if value < F::zero() {
                    return Err(Error::invalid(format!("alpha must be >= 0, got {value}")));
                }
                Ok(())
            }
            ScheduleSpec::Beta3Thalf { start, value, .. } => {
                for (name, b) in [("start", start), ("value", value)] {
                    if !(b > F::zero() && b < F::one()) {
                        return Err(Error::invalid(format!(
                            "beta3 schedule {name} must lie in (0,1), got {b}"
                        )));
                    }
                }
                Ok(())
            }
            ScheduleSpec::LrWarmupCosine { warmup, total, .. } => {
                if warmup > total {
                    return Err(Error::invalid(format!(
                        "lr warmup {warmup} exceeds total {total}"
                    )));
                }
                Ok(())
            }
            ScheduleSpec::LrWarmupConstantLinearDecay {
                warmup,
                decay_start,
                decay_end,
                ..
            } => {
                if !(warmup <= decay_start && decay_start <= decay_end) {
                    return Err(Error::invalid(format!(
                        "need warmup <= decay_start <= decay_end, got {warmup}, {decay_start}, {decay_end}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Last step at which the schedule still changes.
    pub fn horizon(&self) -> u64 {
        match *self {
            ScheduleSpec::Constant { .. } => 0,
            ScheduleSpec::LinearWarmupAlpha { warmup, .. } => warmup,
            ScheduleSpec::Beta3Thalf { warmup, .. } => warmup,
            ScheduleSpec::LrWarmupCosine { total, .. } => total,
            ScheduleSpec::LrWarmupConstantLinearDecay { decay_end, .. } => decay_end,
        }
    }

    pub fn value_at(&self, t: u64) -> F {
        match *self {
            ScheduleSpec::Constant { value } => value,
            ScheduleSpec::LinearWarmupAlpha { value, warmup } => alpha_at(value, warmup, t),
            ScheduleSpec::Beta3Thalf {
                start,
                value,
                warmup,
            } => beta3_at(start, value, warmup, t),
            ScheduleSpec::LrWarmupCosine {
                peak,
                floor,
                warmup,
                total,
            } => lr_warmup_cosine(peak, floor, warmup, total, t),
            ScheduleSpec::LrWarmupConstantLinearDecay {
                peak,
                floor,
                warmup,
                decay_start,
                decay_end,
            } => lr_warmup_constant_linear_decay(peak, floor, warmup, decay_start, decay_end, t),
        }
    }
}

fn ratio<F: Scalar>(t: u64, horizon: u64) -> F {
    F::from_u64(t).unwrap() / F::from_u64(horizon).unwrap()
}

/// Linear α ramp. A zero horizon disables the warmup.
pub fn alpha_at<F: Scalar>(alpha: F, warmup: u64, t: u64) -> F {
    if warmup == 0 {
        return alpha;
    }
    (F::from_u64(t).unwrap() * alpha / F::from_u64(warmup).unwrap()).min(alpha)
}

/// β₃ warmup whose half-life interpolates linearly from that of `start` to
/// that of `end`. A zero horizon disables the warmup.
pub fn beta3_at<F: Scalar>(start: F, end: F, warmup: u64, t: u64) -> F {
    if warmup == 0 || t >= warmup {
        return end;
    }
    beta_interpolated(start, end, ratio(t, warmup)).min(end)
}

/// The β whose half-life is `(1 - mu) * t_half(start) + mu * t_half(end)`,
/// in the closed form obtained by eliminating the logarithms.
pub fn beta_interpolated<F: Scalar>(start: F, end: F, mu: F) -> F {
    let (ls, le) = (start.ln(), end.ln());
    ((ls * le) / ((F::one() - mu) * le + mu * ls)).exp()
}

/// Number of most recent steps holding half of an EMA's total weight.
pub fn t_half<F: Scalar>(beta: F) -> Result<F> {
    if !(beta > F::zero() && beta < F::one()) {
        return Err(Error::invalid(format!("t_half needs beta in (0,1), got {beta}")));
    }
    Ok(F::lit(0.5).ln() / beta.ln() - F::one())
}

/// Inverse of [`t_half`]: the β with half-life `t`.
pub fn t_half_inverse<F: Scalar>(t: F) -> F {
    F::lit(0.5).powf(F::one() / (t + F::one()))
}

pub fn lr_warmup_cosine<F: Scalar>(peak: F, floor: F, warmup: u64, total: u64, t: u64) -> F {
    if t < warmup {
        return peak * ratio(t, warmup);
    }
    if t >= total {
        return floor;
    }
    let progress: F = ratio(t - warmup, total - warmup);
    let cos = (F::lit(PI) * progress).cos();
    floor + F::lit(0.5) * (peak - floor) * (F::one() + cos)
}

pub fn lr_warmup_constant_linear_decay<F: Scalar>(
    peak: F,
    floor: F,
    warmup: u64,
    decay_start: u64,
    decay_end: u64,
    t: u64,
) -> F {
    if t < warmup {
        return peak * ratio(t, warmup);
    }
    if t <= decay_start {
        return peak;
    }
    if t >= decay_end {
        return floor;
    }
    let progress: F = ratio(t - decay_start, decay_end - decay_start);
    peak + (floor - peak) * progress
}
