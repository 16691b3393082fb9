use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamVec;
use crate::scalar::{pow_step, Scalar};

use super::{check_beta, check_step_inputs, diverged_unless_finite};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "F: Scalar + Deserialize<'de>"))]
pub struct AdamWHyper<F> {
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub weight_decay: F,
}

impl<F: Scalar> Default for AdamWHyper<F> {
    fn default() -> Self {
        Self {
            beta1: F::lit(0.9),
            beta2: F::lit(0.999),
            eps: F::lit(1e-8),
            weight_decay: F::zero(),
        }
    }
}

impl<F: Scalar> AdamWHyper<F> {
    pub fn validate(&self) -> Result<()> {
        check_beta("beta1", self.beta1)?;
        check_beta("beta2", self.beta2)?;
        if !(self.eps >= F::zero()) || !(self.weight_decay >= F::zero()) {
            return Err(Error::invalid("eps and weight_decay must be >= 0"));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<F> {
    pub m: ParamVec<F>,
    pub nu: ParamVec<F>,
    pub step: u64,
    pub hyper: AdamWHyper<F>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(len: usize, hyper: AdamWHyper<F>) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            m: ParamVec::zeros(len),
            nu: ParamVec::zeros(len),
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

    pub fn is_finite(&self) -> bool {
        self.m.is_finite() && self.nu.is_finite()
    }

    pub fn step(&mut self, theta: &mut ParamVec<F>, grad: &ParamVec<F>, eta: F) -> Result<()> {
        check_step_inputs(self.len(), theta, grad, eta)?;
        let AdamWHyper {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.hyper;
        self.step += 1;
        let bc1 = F::one() - pow_step(beta1, self.step);
        let bc2_sqrt = (F::one() - pow_step(beta2, self.step)).sqrt();
        let (k1, k2) = (F::one() - beta1, F::one() - beta2);

        for i in 0..theta.len() {
            let g = grad[i];
            let m = beta1 * self.m[i] + k1 * g;
            let nu = beta2 * self.nu[i] + k2 * g * g;
            self.m[i] = m;
            self.nu[i] = nu;
            let denom = nu.sqrt() / bc2_sqrt + eps;
            let update = (m / bc1) / denom;
            theta[i] = theta[i] - eta * (update + weight_decay * theta[i]);
        }
        diverged_unless_finite(self.step, theta.is_finite() && self.is_finite())
    }
}
