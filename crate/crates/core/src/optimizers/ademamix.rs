//! Adam with a mixture of a fast and a slow gradient EMA.
//!
//! The fast EMA `m1` and the second moment `nu` are bias-corrected exactly as
//! in AdamW. The slow EMA `m2` is never bias-corrected: starting from zero it
//! fills in gradually, which damps its contribution early in training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamVec;
use crate::scalar::{pow_step, Scalar};
use crate::schedulers::ScheduleSpec;

use super::{check_beta, check_step_inputs, diverged_unless_finite};

/// How the two EMAs are combined in the numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    /// `m1_hat + alpha * m2`
    #[default]
    Additive,
    /// `(1 - alpha) * m1_hat + alpha * m2`, with `alpha` in `[0, 1]`
    Convex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "F: Scalar + Deserialize<'de>"))]
pub struct AdEMAMixHyper<F> {
    pub beta1: F,
    pub beta2: F,
    /// Final slow-EMA decay.
    pub beta3: F,
    /// Final mixing coefficient.
    pub alpha: F,
    pub eps: F,
    pub weight_decay: F,
    pub t_alpha: u64,
    pub t_beta3: u64,
    /// Initial β₃ of the warmup; `None` means `beta1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_start: Option<F>,
    pub mixing: Mixing,
}

impl<F: Scalar> Default for AdEMAMixHyper<F> {
    fn default() -> Self {
        Self {
            beta1: F::lit(0.9),
            beta2: F::lit(0.999),
            beta3: F::lit(0.9999),
            alpha: F::lit(5.0),
            eps: F::lit(1e-8),
            weight_decay: F::zero(),
            t_alpha: 0,
            t_beta3: 0,
            beta_start: None,
            mixing: Mixing::Additive,
        }
    }
}

impl<F: Scalar> AdEMAMixHyper<F> {
    pub fn validate(&self) -> Result<()> {
        check_beta("beta1", self.beta1)?;
        check_beta("beta2", self.beta2)?;
        check_beta("beta3", self.beta3)?;
        if !(self.alpha >= F::zero()) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.mixing == Mixing::Convex && self.alpha > F::one() {
            return Err(Error::invalid(format!(
                "convex mixing needs alpha in [0,1], got {}",
                self.alpha
            )));
        }
        if !(self.eps >= F::zero()) || !(self.weight_decay >= F::zero()) {
            return Err(Error::invalid("eps and weight_decay must be >= 0"));
        }
        if let Some(b) = self.beta_start {
            check_beta("beta_start", b)?;
        }
        Ok(())
    }

    pub fn beta_start(&self) -> F {
        self.beta_start.unwrap_or(self.beta1)
    }

    pub fn alpha_schedule(&self) -> ScheduleSpec<F> {
        ScheduleSpec::LinearWarmupAlpha {
            value: self.alpha,
            warmup: self.t_alpha,
        }
    }

    /// β₃ warmup. With `beta_start == 0` (the `beta1 = 0` setting) the
    /// half-life warmup is undefined and β₃ is held at its final value.
    pub fn beta3_schedule(&self) -> ScheduleSpec<F> {
        let start = self.beta_start();
        if self.t_beta3 == 0 || start <= F::zero() {
            return ScheduleSpec::constant(self.beta3);
        }
        ScheduleSpec::Beta3Thalf {
            start,
            value: self.beta3,
            warmup: self.t_beta3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdEMAMix<F> {
    /// Fast EMA; `None` when `beta1 == 0` and the current gradient stands in.
    pub m1: Option<ParamVec<F>>,
    pub m2: ParamVec<F>,
    pub nu: ParamVec<F>,
    pub step: u64,
    /// Global step at which the α/β₃ scheduler clock started.
    pub schedule_origin: u64,
    pub hyper: AdEMAMixHyper<F>,
}

impl<F: Scalar> AdEMAMix<F> {
    /// Fresh state. No fast buffer is allocated when `beta1 == 0`.
    pub fn new(len: usize, hyper: AdEMAMixHyper<F>) -> Result<Self> {
        hyper.validate()?;
        let m1 = (hyper.beta1 != F::zero()).then(|| ParamVec::zeros(len));
        Ok(Self {
            m1,
            m2: ParamVec::zeros(len),
            nu: ParamVec::zeros(len),
            step: 0,
            schedule_origin: 0,
            hyper,
        })
    }

    /// Fresh state that keeps an explicit fast buffer even when `beta1 == 0`.
    pub fn with_fast_buffer(len: usize, hyper: AdEMAMixHyper<F>) -> Result<Self> {
        let mut state = Self::new(len, hyper)?;
        state.m1.get_or_insert_with(|| ParamVec::zeros(len));
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.m2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m2.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.m1.as_ref().is_none_or(|m| m.is_finite()) && self.m2.is_finite() && self.nu.is_finite()
    }

    /// Scheduler clock for the next update: `step + 1 - schedule_origin`.
    pub fn next_schedule_step(&self) -> u64 {
        self.step + 1 - self.schedule_origin
    }

    /// `(alpha_t, beta3_t)` for the next update.
    pub fn scheduled_values(&self) -> (F, F) {
        let t = self.next_schedule_step();
        (
            self.hyper.alpha_schedule().value_at(t),
            self.hyper.beta3_schedule().value_at(t),
        )
    }

    /// One update with the additive mixture `m1_hat + alpha_t * m2`.
    pub fn step(
        &mut self,
        theta: &mut ParamVec<F>,
        grad: &ParamVec<F>,
        eta: F,
        alpha_t: F,
        beta3_t: F,
    ) -> Result<()> {
        self.update(theta, grad, eta, beta3_t, |m1_hat, m2| m1_hat + alpha_t * m2)
    }

    /// One update with the convex mixture `(1 - alpha_hat) m1_hat + alpha_hat m2`,
    /// scaled by `eta_hat`.
    ///
    /// With static hyperparameters, `eta_hat = eta (alpha + 1)`,
    /// `alpha_hat = alpha / (alpha + 1)` and weight decay divided by
    /// `alpha + 1`, this reproduces [`Self::step`].
    pub fn step_convex(
        &mut self,
        theta: &mut ParamVec<F>,
        grad: &ParamVec<F>,
        eta_hat: F,
        alpha_hat: F,
        beta3_t: F,
    ) -> Result<()> {
        if !(alpha_hat >= F::zero() && alpha_hat <= F::one()) {
            return Err(Error::invalid(format!(
                "alpha_hat must lie in [0,1], got {alpha_hat}"
            )));
        }
        let keep = F::one() - alpha_hat;
        self.update(theta, grad, eta_hat, beta3_t, |m1_hat, m2| {
            keep * m1_hat + alpha_hat * m2
        })
    }

    fn update(
        &mut self,
        theta: &mut ParamVec<F>,
        grad: &ParamVec<F>,
        eta: F,
        beta3_t: F,
        mix: impl Fn(F, F) -> F,
    ) -> Result<()> {
        check_step_inputs(self.len(), theta, grad, eta)?;
        check_beta("beta3_t", beta3_t)?;
        let AdEMAMixHyper {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.hyper;
        self.step += 1;
        let bc1 = F::one() - pow_step(beta1, self.step);
        let bc2_sqrt = (F::one() - pow_step(beta2, self.step)).sqrt();
        let (k1, k2, k3) = (F::one() - beta1, F::one() - beta2, F::one() - beta3_t);

        for i in 0..theta.len() {
            let g = grad[i];
            let m1_hat = match self.m1.as_mut() {
                Some(m1) => {
                    let m = beta1 * m1[i] + k1 * g;
                    m1[i] = m;
                    m / bc1
                }
                None => g,
            };
            let m2 = beta3_t * self.m2[i] + k3 * g;
            let nu = beta2 * self.nu[i] + k2 * g * g;
            self.m2[i] = m2;
            self.nu[i] = nu;
            let denom = nu.sqrt() / bc2_sqrt + eps;
            let update = mix(m1_hat, m2) / denom;
            theta[i] = theta[i] - eta * (update + weight_decay * theta[i]);
        }
        diverged_unless_finite(self.step, theta.is_finite() && self.is_finite())
    }
}

/// Static reparametrization of the additive form into the convex one:
/// `(eta_hat, alpha_hat, weight_decay_hat)`.
pub fn convex_reparametrization<F: Scalar>(eta: F, alpha: F, weight_decay: F) -> (F, F, F) {
    let scale = alpha + F::one();
    (eta * scale, alpha / scale, weight_decay / scale)
}
