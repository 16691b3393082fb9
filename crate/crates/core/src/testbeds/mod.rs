//! Differentiable objectives with analytic gradients, and a
//! finite-difference checker for them.

mod analytic;
mod data;
mod mlp;

pub use analytic::{rosenbrock, sharp_valley, Quadratic, Rosenbrock, SharpValley};
pub use data::{DatasetSpec, SyntheticDataset};
pub use mlp::{MlpTask, TinyMlp};

use crate::error::Result;
use crate::numerics::ParamVec;
use crate::optimizers::OptimizerState;
use crate::scalar::Scalar;

/// A loss with an analytic gradient.
///
/// `batch` selects sample indices for data-driven objectives; `None`
/// means the objective's evaluation set (analytic objectives ignore it).
pub trait Objective<F: Scalar> {
    fn dim(&self) -> usize;

    fn loss(&self, theta: &ParamVec<F>, batch: Option<&[usize]>) -> Result<F>;

    fn loss_grad(&self, theta: &ParamVec<F>, batch: Option<&[usize]>) -> Result<(F, ParamVec<F>)>;

    /// Known minimizer, when there is one.
    fn optimum(&self) -> Option<ParamVec<F>> {
        None
    }
}

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Central finite differences with step `1e-5 * max(1, |theta_i|)`.
pub fn finite_difference_check<F: Scalar, O: Objective<F> + ?Sized>(
    objective: &O,
    theta: &ParamVec<F>,
    batch: Option<&[usize]>,
) -> Result<GradCheck> {
    let (_, analytic) = objective.loss_grad(theta, batch)?;
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
    };
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let x = theta[i];
        let h = F::lit(1e-5) * F::one().max(x.abs());
        probe[i] = x + h;
        let up = objective.loss(&probe, batch)?;
        probe[i] = x - h;
        let down = objective.loss(&probe, batch)?;
        probe[i] = x;
        let numeric = ((up - down) / (h + h)).widen();
        let a = analytic[i].widen();
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        if rel > worst.max_rel_error || rel.is_nan() {
            worst = GradCheck {
                max_rel_error: rel,
                worst_index: i,
            };
        }
    }
    Ok(worst)
}

/// Gives every first-moment buffer an initial value ("speed"); second
/// moments stay at zero and the step counter is not touched.
pub fn momentum_preseed<F: Scalar>(
    state: &mut OptimizerState<F>,
    m_init: &ParamVec<F>,
) -> Result<()> {
    state.preseed_momentum(m_init)
}
