//! Mid-training conversions between AdamW and AdEMAMix.

use crate::error::{Error, Result};
use crate::numerics::ParamVec;
use crate::scalar::Scalar;

use super::{AdEMAMix, AdEMAMixHyper, AdamW, AdamWHyper};

/// Starts AdEMAMix from a running AdamW state.
///
/// `m` becomes the fast EMA and `nu` carries over; the slow EMA starts at
/// zero. The global step keeps counting (bias corrections continue), while
/// the α/β₃ scheduler clock restarts at the switch.
pub fn switch_to_ademamix<F: Scalar>(
    adamw: AdamW<F>,
    t_switch: u64,
    hyper: AdEMAMixHyper<F>,
) -> Result<AdEMAMix<F>> {
    if adamw.step != t_switch {
        return Err(Error::invalid(format!(
            "switch requested at step {t_switch} but AdamW is at step {}",
            adamw.step
        )));
    }
    hyper.validate()?;
    let len = adamw.len();
    let m1 = (hyper.beta1 != F::zero()).then_some(adamw.m);
    Ok(AdEMAMix {
        m1,
        m2: ParamVec::zeros(len),
        nu: adamw.nu,
        step: adamw.step,
        schedule_origin: t_switch,
        hyper,
    })
}

/// Drops the slow EMA of a running AdEMAMix state, continuing as AdamW with
/// the same `beta1`, `beta2`, `eps` and weight decay.
pub fn switch_to_adamw<F: Scalar>(adema: AdEMAMix<F>, t_switch: u64) -> Result<AdamW<F>> {
    if adema.step != t_switch {
        return Err(Error::invalid(format!(
            "switch requested at step {t_switch} but AdEMAMix is at step {}",
            adema.step
        )));
    }
    let len = adema.len();
    let h = adema.hyper;
    Ok(AdamW {
        m: adema.m1.unwrap_or_else(|| ParamVec::zeros(len)),
        nu: adema.nu,
        step: adema.step,
        hyper: AdamWHyper {
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
            weight_decay: h.weight_decay,
        },
    })
}
