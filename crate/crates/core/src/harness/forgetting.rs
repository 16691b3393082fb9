//! Held-out batch forgetting: a control run that never sees the batch and an
//! injected run that trains on it exactly once.

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::run::{RunRecord, Runner};

/// Offset at which the normalized curve reaches -1.
pub const NORMALIZE_OFFSET: u64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForgettingResult {
    pub t_b: u64,
    pub control: RunRecord,
    pub injected: RunRecord,
    /// Held-out loss of the injected run just before the injection step.
    pub loss_before: f64,
    /// `(L(tau + s) - L(tau)) / (L(tau) - L(tau + 50))` for `s = 0, 1, ...`
    /// with `tau = t_b - 1`; `None` when the run ends before `tau + 50`.
    pub normalized: Option<Vec<f64>>,
}

impl ForgettingResult {
    /// `(step, control - injected)` for every step from `t_b` on.
    pub fn gap(&self) -> Vec<(u64, f64)> {
        self.injected
            .rows
            .iter()
            .filter(|r| r.step >= self.t_b)
            .filter_map(|r| {
                let c = self.control.row_at(r.step)?.heldout_loss?;
                Some((r.step, c - r.heldout_loss?))
            })
            .collect()
    }

    /// Steps after `t_b` for which the gap stays strictly positive.
    pub fn positive_gap_steps(&self) -> u64 {
        self.gap()
            .iter()
            .skip_while(|(s, _)| *s < self.t_b + 1)
            .take_while(|(_, g)| *g > 0.0)
            .count() as u64
    }
}

/// Runs both arms with a record cadence of 1 so every step is observed.
pub fn run_forgetting_protocol(cfg: &ExperimentConfig) -> Result<ForgettingResult> {
    let f = cfg
        .forgetting
        .ok_or_else(|| Error::config("forgetting protocol needs a [forgetting] section"))?;
    let mut dense = cfg.clone();
    dense.record_every = Some(1);
    let mut runner = Runner::new(&dense)?;

    let init = runner.initial_state()?;
    let mut control_state = init.clone();
    runner.set_injection(None);
    let mut control = RunRecord::empty();
    runner.advance(&mut control_state, dense.steps, &mut control)?;

    runner.set_injection(Some(f.t_b));
    let mut injected_state = init.clone();
    let mut injected = RunRecord::empty();
    runner.advance(&mut injected_state, dense.steps, &mut injected)?;

    let tau = f.t_b - 1;
    let heldout_at = |step: u64| -> Result<Option<f64>> {
        if step == 0 {
            runner.heldout_loss(&init.theta)
        } else {
            Ok(injected.row_at(step).and_then(|r| r.heldout_loss))
        }
    };
    let loss_before = heldout_at(tau)?.unwrap_or(f64::NAN);
    let normalized = match heldout_at(tau + NORMALIZE_OFFSET)? {
        Some(anchor) => {
            let scale = loss_before - anchor;
            let mut curve = vec![0.0];
            curve.extend(
                injected
                    .rows
                    .iter()
                    .filter(|r| r.step > tau)
                    .map_while(|r| r.heldout_loss)
                    .map(|l| (l - loss_before) / scale),
            );
            Some(curve)
        }
        None => None,
    };

    Ok(ForgettingResult {
        t_b: f.t_b,
        control,
        injected,
        loss_before,
        normalized,
    })
}
