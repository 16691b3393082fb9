//! The optimizer family and its shared plumbing.
//!
//! Optimizers never own schedules: the caller evaluates η, α, β₃ (and β₄)
//! for the upcoming step and passes them in. [`OptimizerState::scheduled`]
//! is a convenience that evaluates the α/β-schedules implied by the state's
//! own hyperparameters.

mod ademamix;
mod adamw;
mod baselines;
pub mod checkpoint;
mod switch;

pub use adamw::{AdamW, AdamWHyper};
pub use ademamix::{convex_reparametrization, AdEMAMix, AdEMAMixHyper, Mixing};
pub use baselines::{
    Ad3EMAMix, Ad3EMAMixHyper, AdMetaS, AdMetaSHyper, AggMo, AggMoHyper, Lion, LionHyper,
};
pub use switch::{switch_to_adamw, switch_to_ademamix};
pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamVec;
use crate::scalar::Scalar;

pub(crate) fn check_beta<F: Scalar>(name: &str, beta: F) -> Result<()> {
    if !(beta >= F::zero() && beta < F::one()) {
        return Err(Error::invalid(format!("{name} must lie in [0,1), got {beta}")));
    }
    Ok(())
}

pub(crate) fn check_step_inputs<F: Scalar>(
    len: usize,
    theta: &ParamVec<F>,
    grad: &ParamVec<F>,
    eta: F,
) -> Result<()> {
    for actual in [theta.len(), grad.len()] {
        if actual != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual,
            });
        }
    }
    if !(eta >= F::zero()) {
        return Err(Error::invalid(format!("learning rate must be >= 0, got {eta}")));
    }
    Ok(())
}

pub(crate) fn diverged_unless_finite(step: u64, finite: bool) -> Result<()> {
    if finite {
        Ok(())
    } else {
        Err(Error::Diverged { step })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adamw,
    Ademamix,
    Lion,
    AdmetaS,
    Aggmo,
    Ad3emamix,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adamw => "adamw",
            OptimizerKind::Ademamix => "ademamix",
            OptimizerKind::Lion => "lion",
            OptimizerKind::AdmetaS => "admeta_s",
            OptimizerKind::Aggmo => "aggmo",
            OptimizerKind::Ad3emamix => "ad3emamix",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            OptimizerKind::Adamw,
            OptimizerKind::Ademamix,
            OptimizerKind::Lion,
            OptimizerKind::AdmetaS,
            OptimizerKind::Aggmo,
            OptimizerKind::Ad3emamix,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

/// Scalars driving one update. Fields an optimizer does not use are ignored.
///
/// For convex-mixing AdEMAMix, `eta` and `alpha` are read as `eta_hat` and
/// `alpha_hat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScalars<F> {
    pub eta: F,
    pub alpha: F,
    pub beta3: F,
    pub beta4: F,
}

impl<F: Scalar> StepScalars<F> {
    pub fn lr_only(eta: F) -> Self {
        Self {
            eta,
            alpha: F::zero(),
            beta3: F::zero(),
            beta4: F::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState<F> {
    AdamW(AdamW<F>),
    AdEMAMix(AdEMAMix<F>),
    Lion(Lion<F>),
    AdMetaS(AdMetaS<F>),
    AggMo(AggMo<F>),
    Ad3EMAMix(Ad3EMAMix<F>),
}

impl<F: Scalar> OptimizerState<F> {
    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerState::AdamW(_) => OptimizerKind::Adamw,
            OptimizerState::AdEMAMix(_) => OptimizerKind::Ademamix,
            OptimizerState::Lion(_) => OptimizerKind::Lion,
            OptimizerState::AdMetaS(_) => OptimizerKind::AdmetaS,
            OptimizerState::AggMo(_) => OptimizerKind::Aggmo,
            OptimizerState::Ad3EMAMix(_) => OptimizerKind::Ad3emamix,
        }
    }

    pub fn step_count(&self) -> u64 {
        match self {
            OptimizerState::AdamW(s) => s.step,
            OptimizerState::AdEMAMix(s) => s.step,
            OptimizerState::Lion(s) => s.step,
            OptimizerState::AdMetaS(s) => s.step,
            OptimizerState::AggMo(s) => s.step,
            OptimizerState::Ad3EMAMix(s) => s.step,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            OptimizerState::AdamW(s) => s.len(),
            OptimizerState::AdEMAMix(s) => s.len(),
            OptimizerState::Lion(s) => s.len(),
            OptimizerState::AdMetaS(s) => s.len(),
            OptimizerState::AggMo(s) => s.len(),
            OptimizerState::Ad3EMAMix(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Step scalars for the next update, given the externally scheduled
    /// learning rate.
    pub fn scheduled(&self, eta: F) -> StepScalars<F> {
        match self {
            OptimizerState::AdEMAMix(s) => {
                let (alpha, beta3) = s.scheduled_values();
                StepScalars {
                    eta,
                    alpha,
                    beta3,
                    beta4: F::zero(),
                }
            }
            OptimizerState::Ad3EMAMix(s) => {
                let t = s.step + 1;
                StepScalars {
                    eta,
                    alpha: s.hyper.alpha_schedule().value_at(t),
                    beta3: s.hyper.beta3_schedule().value_at(t),
                    beta4: s.hyper.beta4_schedule().value_at(t),
                }
            }
            _ => StepScalars::lr_only(eta),
        }
    }

    pub fn step(
        &mut self,
        theta: &mut ParamVec<F>,
        grad: &ParamVec<F>,
        scalars: &StepScalars<F>,
    ) -> Result<()> {
        let StepScalars {
            eta,
            alpha,
            beta3,
            beta4,
        } = *scalars;
        match self {
            OptimizerState::AdamW(s) => s.step(theta, grad, eta),
            OptimizerState::AdEMAMix(s) => match s.hyper.mixing {
                Mixing::Additive => s.step(theta, grad, eta, alpha, beta3),
                Mixing::Convex => s.step_convex(theta, grad, eta, alpha, beta3),
            },
            OptimizerState::Lion(s) => s.step(theta, grad, eta),
            OptimizerState::AdMetaS(s) => s.step(theta, grad, eta),
            OptimizerState::AggMo(s) => s.step(theta, grad, eta),
            OptimizerState::Ad3EMAMix(s) => s.step(theta, grad, eta, alpha, beta3, beta4),
        }
    }

    /// Overwrites every first-moment buffer with `m_init`, leaving second
    /// moments and the step counter untouched.
    pub fn preseed_momentum(&mut self, m_init: &ParamVec<F>) -> Result<()> {
        if m_init.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: m_init.len(),
            });
        }
        match self {
            OptimizerState::AdamW(s) => s.m = m_init.clone(),
            OptimizerState::AdEMAMix(s) => {
                if let Some(m1) = s.m1.as_mut() {
                    *m1 = m_init.clone();
                }
                s.m2 = m_init.clone();
            }
            OptimizerState::Lion(s) => s.m = m_init.clone(),
            OptimizerState::AdMetaS(s) => {
                s.m1 = m_init.clone();
                s.m2 = m_init.clone();
            }
            OptimizerState::AggMo(s) => {
                for b in &mut s.buffers {
                    *b = m_init.clone();
                }
            }
            OptimizerState::Ad3EMAMix(s) => {
                s.m1 = m_init.clone();
                s.m2 = m_init.clone();
                s.m3 = m_init.clone();
            }
        }
        Ok(())
    }

    /// Second-moment buffer, for optimizers that keep one.
    pub fn second_moment(&self) -> Option<&ParamVec<F>> {
        match self {
            OptimizerState::AdamW(s) => Some(&s.nu),
            OptimizerState::AdEMAMix(s) => Some(&s.nu),
            OptimizerState::Ad3EMAMix(s) => Some(&s.nu),
            _ => None,
        }
    }
}

impl<F> From<AdamW<F>> for OptimizerState<F> {
    fn from(s: AdamW<F>) -> Self {
        OptimizerState::AdamW(s)
    }
}

impl<F> From<AdEMAMix<F>> for OptimizerState<F> {
    fn from(s: AdEMAMix<F>) -> Self {
        OptimizerState::AdEMAMix(s)
    }
}

impl<F> From<Lion<F>> for OptimizerState<F> {
    fn from(s: Lion<F>) -> Self {
        OptimizerState::Lion(s)
    }
}

impl<F> From<AdMetaS<F>> for OptimizerState<F> {
    fn from(s: AdMetaS<F>) -> Self {
        OptimizerState::AdMetaS(s)
    }
}

impl<F> From<AggMo<F>> for OptimizerState<F> {
    fn from(s: AggMo<F>) -> Self {
        OptimizerState::AggMo(s)
    }
}

impl<F> From<Ad3EMAMix<F>> for OptimizerState<F> {
    fn from(s: Ad3EMAMix<F>) -> Self {
        OptimizerState::Ad3EMAMix(s)
    }
}
