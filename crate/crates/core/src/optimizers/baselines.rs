//! Comparison optimizers: Lion, AdMeta-S, AggMo and a three-EMA AdEMAMix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamVec;
use crate::scalar::{pow_step, Scalar};
use crate::schedulers::ScheduleSpec;

use super::{check_beta, check_step_inputs, diverged_unless_finite};

fn sign<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        F::one()
    } else if x < F::zero() {
        -F::one()
    } else {
        F::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "F: Scalar + Deserialize<'de>"))]
pub struct LionHyper<F> {
    /// Interpolation between the stored momentum and the fresh gradient.
    pub alpha: F,
    pub beta: F,
    pub weight_decay: F,
}

impl<F: Scalar> Default for LionHyper<F> {
    fn default() -> Self {
        Self {
            alpha: F::lit(0.9),
            beta: F::lit(0.99),
            weight_decay: F::zero(),
        }
    }
}

/// Sign-of-interpolation update; the EMA is refreshed after the parameters move.
#[derive(Debug, Clone, PartialEq)]
pub struct Lion<F> {
    pub m: ParamVec<F>,
    pub step: u64,
    pub hyper: LionHyper<F>,
}

impl<F: Scalar> Lion<F> {
    pub fn new(len: usize, hyper: LionHyper<F>) -> Result<Self> {
        if !(hyper.alpha >= F::zero() && hyper.alpha <= F::one()) {
            return Err(Error::invalid(format!(
                "lion alpha must lie in [0,1], got {}",
                hyper.alpha
            )));
        }
        check_beta("beta", hyper.beta)?;
        if !(hyper.weight_decay >= F::zero()) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        Ok(Self {
            m: ParamVec::zeros(len),
            step: 0,
            hyper,
        })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step(&mut self, theta: &mut ParamVec<F>, grad: &ParamVec<F>, eta: F) -> Result<()> {
        check_step_inputs(self.len(), theta, grad, eta)?;
        let LionHyper {
            alpha,
            beta,
            weight_decay,
        } = self.hyper;
        self.step += 1;
        for i in 0..theta.len() {
            let g = grad[i];
            let direction = sign(alpha * self.m[i] + (F::one() - alpha) * g);
            theta[i] = theta[i] - eta * (direction + weight_decay * theta[i]);
            self.m[i] = beta * self.m[i] + (F::one() - beta) * g;
        }
        diverged_unless_finite(self.step, theta.is_finite() && self.m.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "F: Scalar + Deserialize<'de>"))]
pub struct AdMetaSHyper<F> {
    pub beta1: F,
    pub beta2: F,
}

impl<F: Scalar> Default for AdMetaSHyper<F> {
    fn default() -> Self {
        Self {
            beta1: F::lit(0.9),
            beta2: F::lit(0.2),
        }
    }
}

impl<F: Scalar> AdMetaSHyper<F> {
    /// `25 - 10 (beta1 + 1/beta1)`
    pub fn mu(&self) -> F {
        F::lit(25.0) - F::lit(10.0) * (self.beta1 + self.beta1.recip())
    }

    /// `10 / beta1 - 9`
    pub fn kappa(&self) -> F {
        F::lit(10.0) / self.beta1 - F::lit(9.0)
    }
}

/// Nested-EMA optimizer; the inner buffer accumulates raw gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdMetaS<F> {
    pub m1: ParamVec<F>,
    pub m2: ParamVec<F>,
    pub step: u64,
    pub hyper: AdMetaSHyper<F>,
}

impl<F: Scalar> AdMetaS<F> {
    pub fn new(len: usize, hyper: AdMetaSHyper<F>) -> Result<Self> {
        if !(hyper.beta1 > F::zero() && hyper.beta1 < F::one()) {
            return Err(Error::invalid(format!(
                "AdMeta-S needs beta1 in (0,1), got {}",
                hyper.beta1
            )));
        }
        check_beta("beta2", hyper.beta2)?;
        Ok(Self {
            m1: ParamVec::zeros(len),
            m2: ParamVec::zeros(len),
            step: 0,
            hyper,
        })
    }

    pub fn len(&self) -> usize {
        self.m1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m1.is_empty()
    }

    pub fn step(&mut self, theta: &mut ParamVec<F>, grad: &ParamVec<F>, eta: F) -> Result<()> {
        check_step_inputs(self.len(), theta, grad, eta)?;
        let AdMetaSHyper { beta1, beta2 } = self.hyper;
        let (mu, kappa) = (self.hyper.mu(), self.hyper.kappa());
        self.step += 1;
        for i in 0..theta.len() {
            let g = grad[i];
            let m1 = beta1 * self.m1[i] + g;
            let h = kappa * g + mu * m1;
            let m2 = beta2 * self.m2[i] + (F::one() - beta2) * h;
            self.m1[i] = m1;
            self.m2[i] = m2;
            theta[i] = theta[i] - eta * m2;
        }
        diverged_unless_finite(
            self.step,
            theta.is_finite() && self.m1.is_finite() && self.m2.is_finite(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "F: Scalar + Deserialize<'de>"))]
pub struct AggMoHyper<F> {
    pub betas: Vec<F>,
}

impl<F: Scalar> Default for AggMoHyper<F> {
    fn default() -> Self {
        Self {
            betas: vec![F::zero(), F::lit(0.9), F::lit(0.99)],
        }
    }
}

/// K heavy-ball buffers averaged into one step. Buffers accumulate the raw
/// gradient, without a `(1 - beta)` factor.
#[derive(Debug, Clone, PartialEq)]
pub struct AggMo<F> {
    pub buffers: Vec<ParamVec<F>>,
    pub step: u64,
    pub hyper: AggMoHyper<F>,
}

impl<F: Scalar> AggMo<F> {
    pub fn new(len: usize, hyper: AggMoHyper<F>) -> Result<Self> {
        if hyper.betas.is_empty() {
            return Err(Error::invalid("AggMo needs at least one beta"));
        }
        for &b in &hyper.betas {
            check_beta("aggmo beta", b)?;
        }
        Ok(Self {
            buffers: vec![ParamVec::zeros(len); hyper.betas.len()],
            step: 0,
            hyper,
        })
    }

    pub fn len(&self) -> usize {
        self.buffers[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&mut self, theta: &mut ParamVec<F>, grad: &ParamVec<F>, eta: F) -> Result<()> {
        check_step_inputs(self.len(), theta, grad, eta)?;
        self.step += 1;
        let scale = eta / F::from_usize(self.buffers.len()).unwrap();
        for i in 0..theta.len() {
            let g = grad[i];
            let mut total = F::zero();
            for (buf, &beta) in self.buffers.iter_mut().zip(&self.hyper.betas) {
                buf[i] = beta * buf[i] + g;
                total += buf[i];
            }
            theta[i] = theta[i] - scale * total;
        }
        let finite = theta.is_finite() && self.buffers.iter().all(|b| b.is_finite());
        diverged_unless_finite(self.step, finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "F: Scalar + Deserialize<'de>"))]
pub struct Ad3EMAMixHyper<F> {
    pub beta1: F,
    pub beta2: F,
    pub beta3: F,
    pub beta4: F,
    pub alpha: F,
    pub eps: F,
    pub weight_decay: F,
    pub t_alpha: u64,
    /// Warmup horizon shared by β₃ and β₄.
    pub t_beta3: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_start: Option<F>,
}

impl<F: Scalar> Default for Ad3EMAMixHyper<F> {
    fn default() -> Self {
        Self {
            beta1: F::lit(0.9),
            beta2: F::lit(0.999),
            beta3: F::lit(0.999),
            beta4: F::lit(0.9999),
            alpha: F::lit(4.0),
            eps: F::lit(1e-8),
            weight_decay: F::zero(),
            t_alpha: 0,
            t_beta3: 0,
            beta_start: None,
        }
    }
}

impl<F: Scalar> Ad3EMAMixHyper<F> {
    fn slow_schedule(&self, value: F) -> ScheduleSpec<F> {
        let start = self.beta_start.unwrap_or(self.beta1);
        if self.t_beta3 == 0 || start <= F::zero() {
            return ScheduleSpec::constant(value);
        }
        ScheduleSpec::Beta3Thalf {
            start,
            value,
            warmup: self.t_beta3,
        }
    }

    pub fn alpha_schedule(&self) -> ScheduleSpec<F> {
        ScheduleSpec::LinearWarmupAlpha {
            value: self.alpha,
            warmup: self.t_alpha,
        }
    }

    pub fn beta3_schedule(&self) -> ScheduleSpec<F> {
        self.slow_schedule(self.beta3)
    }

    pub fn beta4_schedule(&self) -> ScheduleSpec<F> {
        self.slow_schedule(self.beta4)
    }
}

/// AdEMAMix with a second slow EMA sharing the mixing coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Ad3EMAMix<F> {
    pub m1: ParamVec<F>,
    pub m2: ParamVec<F>,
    pub m3: ParamVec<F>,
    pub nu: ParamVec<F>,
    pub step: u64,
    pub hyper: Ad3EMAMixHyper<F>,
}

impl<F: Scalar> Ad3EMAMix<F> {
    pub fn new(len: usize, hyper: Ad3EMAMixHyper<F>) -> Result<Self> {
        for (name, b) in [
            ("beta1", hyper.beta1),
            ("beta2", hyper.beta2),
            ("beta3", hyper.beta3),
            ("beta4", hyper.beta4),
        ] {
            check_beta(name, b)?;
        }
        if !(hyper.alpha >= F::zero()) {
            return Err(Error::invalid("alpha must be >= 0"));
        }
        Ok(Self {
            m1: ParamVec::zeros(len),
            m2: ParamVec::zeros(len),
            m3: ParamVec::zeros(len),
            nu: ParamVec::zeros(len),
            step: 0,
            hyper,
        })
    }

    pub fn len(&self) -> usize {
        self.m1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m1.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.m1.is_finite() && self.m2.is_finite() && self.m3.is_finite() && self.nu.is_finite()
    }

    pub fn step(
        &mut self,
        theta: &mut ParamVec<F>,
        grad: &ParamVec<F>,
        eta: F,
        alpha_t: F,
        beta3_t: F,
        beta4_t: F,
    ) -> Result<()> {
        check_step_inputs(self.len(), theta, grad, eta)?;
        check_beta("beta3_t", beta3_t)?;
        check_beta("beta4_t", beta4_t)?;
        let h = self.hyper;
        self.step += 1;
        let bc1 = F::one() - pow_step(h.beta1, self.step);
        let bc2_sqrt = (F::one() - pow_step(h.beta2, self.step)).sqrt();
        for i in 0..theta.len() {
            let g = grad[i];
            let m1 = h.beta1 * self.m1[i] + (F::one() - h.beta1) * g;
            let m2 = beta3_t * self.m2[i] + (F::one() - beta3_t) * g;
            let m3 = beta4_t * self.m3[i] + (F::one() - beta4_t) * g;
            let nu = h.beta2 * self.nu[i] + (F::one() - h.beta2) * g * g;
            self.m1[i] = m1;
            self.m2[i] = m2;
            self.m3[i] = m3;
            self.nu[i] = nu;
            let denom = nu.sqrt() / bc2_sqrt + h.eps;
            let update = (m1 / bc1 + alpha_t * (m2 + m3)) / denom;
            theta[i] = theta[i] - eta * (update + h.weight_decay * theta[i]);
        }
        diverged_unless_finite(self.step, theta.is_finite() && self.is_finite())
    }
}
