//! Closed-form weights that EMA-style estimators assign to past gradients.
//!
//! Index `i` of a profile is the age of the gradient (0 = most recent).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightProfile<F> {
    pub weights: Vec<F>,
    /// Set for profiles built from differences of EMAs, which may go negative.
    pub signed: bool,
}

impl<F: Scalar> WeightProfile<F> {
    pub fn horizon(&self) -> usize {
        self.weights.len().saturating_sub(1)
    }

    pub fn total(&self) -> F {
        self.weights.iter().fold(F::zero(), |a, &w| a + w)
    }

    /// Same profile divided by `norm`.
    pub fn normalized_by(&self, norm: F) -> Self {
        Self {
            weights: self.weights.iter().map(|&w| w / norm).collect(),
            signed: self.signed,
        }
    }

    /// Smallest `k` such that ages `0..=k` carry at least `fraction` of `reference`.
    pub fn cumulative_index(&self, fraction: F, reference: F) -> Option<usize> {
        let target = fraction * reference;
        let mut acc = F::zero();
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if acc >= target {
                return Some(i);
            }
        }
        None
    }
}

fn check_decay<F: Scalar>(name: &str, beta: F) -> Result<()> {
    if !(beta >= F::zero() && beta < F::one()) {
        return Err(Error::invalid(format!("{name} must lie in [0,1), got {beta}")));
    }
    Ok(())
}

fn geometric<F: Scalar>(beta: F, len: usize) -> Vec<F> {
    let keep = F::one() - beta;
    (0..len).map(|i| keep * beta.powi(i as i32)).collect()
}

fn convolve<F: Scalar>(a: &[F], b: &[F], len: usize) -> Vec<F> {
    (0..len)
        .map(|i| {
            let lo = i.saturating_sub(b.len().saturating_sub(1));
            let hi = i.min(a.len().saturating_sub(1));
            (lo..=hi).fold(F::zero(), |acc, j| acc + a[j] * b[i - j])
        })
        .collect()
}

/// `beta^i (1 - beta)` for ages `0..=horizon`.
pub fn ema_weights<F: Scalar>(beta: F, horizon: usize) -> Result<WeightProfile<F>> {
    check_decay("beta", beta)?;
    Ok(WeightProfile {
        weights: geometric(beta, horizon + 1),
        signed: false,
    })
}

/// Unnormalized weights of `m1 + alpha * m2` in steady state.
pub fn mixture_weights<F: Scalar>(
    beta1: F,
    beta3: F,
    alpha: F,
    horizon: usize,
) -> Result<WeightProfile<F>> {
    check_decay("beta1", beta1)?;
    check_decay("beta3", beta3)?;
    let fast = geometric(beta1, horizon + 1);
    let slow = geometric(beta3, horizon + 1);
    Ok(WeightProfile {
        weights: fast.iter().zip(&slow).map(|(&f, &s)| f + alpha * s).collect(),
        signed: alpha < F::zero(),
    })
}

/// Total mass of [`mixture_weights`], used for the normalized view.
pub fn mixture_mass<F: Scalar>(beta1: F, beta3: F, alpha: F, horizon: usize) -> F {
    let n = horizon as i32 + 1;
    (F::one() - beta1.powi(n)) + alpha * (F::one() - beta3.powi(n))
}

/// An EMA of an EMA: the convolution of both geometric profiles.
pub fn nested_ema_weights<F: Scalar>(
    beta_inner: F,
    beta_outer: F,
    horizon: usize,
) -> Result<WeightProfile<F>> {
    check_decay("beta_inner", beta_inner)?;
    check_decay("beta_outer", beta_outer)?;
    let len = horizon + 1;
    let inner = geometric(beta_inner, len);
    let outer = geometric(beta_outer, len);
    Ok(WeightProfile {
        weights: convolve(&inner, &outer, len),
        signed: false,
    })
}

/// `2 * EMA - EMA(EMA)` over hard windows of `window + 1` inputs.
///
/// The outer EMA runs over the last `window + 1` windowed inner EMAs, so the
/// nested part reaches back `2 * window` steps.
pub fn dema_weights<F: Scalar>(beta: F, window: usize, horizon: usize) -> Result<WeightProfile<F>> {
    check_decay("beta", beta)?;
    if window < 1 {
        return Err(Error::invalid("dema window must be >= 1"));
    }
    let len = horizon + 1;
    let windowed = geometric(beta, window + 1);
    let nested = convolve(&windowed, &windowed, len);
    let two = F::lit(2.0);
    let weights = (0..len)
        .map(|i| {
            let single = windowed.get(i).copied().unwrap_or_else(F::zero);
            two * single - nested[i]
        })
        .collect();
    Ok(WeightProfile {
        weights,
        signed: true,
    })
}
