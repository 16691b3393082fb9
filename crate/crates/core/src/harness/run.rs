//! The training loop.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{ParamVec, Rng};
use crate::optimizers::{
    switch_to_adamw, switch_to_ademamix, Checkpoint, OptimizerState,
};
use crate::testbeds::{
    MlpTask, Objective, Quadratic, Rosenbrock, SharpValley, SyntheticDataset, TinyMlp,
};

use super::config::{ExperimentConfig, OptimizerConfig, SwitchTarget, TestbedConfig};

// Sub-stream of the run seed used for MLP initialization.
const STREAM_INIT: u64 = 11;
const THETA_SLOT: &str = "theta";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub step: u64,
    pub loss: f64,
    pub distance_to_optimum: Option<f64>,
    pub eta: f64,
    pub alpha: f64,
    pub beta3: f64,
    pub update_norm: f64,
    pub heldout_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RunStatus {
    Completed,
    /// A non-finite value appeared while taking this step.
    Diverged { step: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub rows: Vec<Row>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn empty() -> Self {
        Self {
            rows: Vec::new(),
            status: RunStatus::Completed,
        }
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    pub fn last(&self) -> Option<&Row> {
        self.rows.last()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.last().map(|r| r.loss)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.loss).reduce(f64::min)
    }

    pub fn row_at(&self, step: u64) -> Option<&Row> {
        self.rows
            .binary_search_by_key(&step, |r| r.step)
            .ok()
            .map(|i| &self.rows[i])
    }
}

/// Parameters and optimizer state after some number of completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub theta: ParamVec<f64>,
    pub optimizer: OptimizerState<f64>,
}

impl RunState {
    pub fn step(&self) -> u64 {
        self.optimizer.step_count()
    }

    /// Optimizer checkpoint with the parameters as an extra slot.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.optimizer.to_checkpoint();
        ck.slots
            .push((THETA_SLOT.to_string(), self.theta.as_slice().to_vec()));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let theta = ck
            .slot(THETA_SLOT)
            .ok_or_else(|| Error::invalid("checkpoint has no theta slot"))?
            .to_vec();
        let mut rest = ck.clone();
        rest.slots.retain(|(name, _)| name != THETA_SLOT);
        Ok(Self {
            theta: ParamVec::new(theta),
            optimizer: OptimizerState::from_checkpoint(&rest)?,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        self.to_checkpoint().encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::decode(bytes)?)
    }
}

pub(crate) enum Testbed {
    Rosenbrock,
    Valley,
    Quadratic(Quadratic<f64>),
    Mlp(MlpTask<f64>),
}

impl Testbed {
    fn objective(&self) -> &dyn Objective<f64> {
        match self {
            Testbed::Rosenbrock => &Rosenbrock,
            Testbed::Valley => &SharpValley,
            Testbed::Quadratic(q) => q,
            Testbed::Mlp(t) => t,
        }
    }
}

/// A validated config with its testbed materialized.
pub struct Runner {
    cfg: ExperimentConfig,
    testbed: Testbed,
    optimum: Option<ParamVec<f64>>,
    inject_at: Option<u64>,
}

impl Runner {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let testbed = match &cfg.testbed {
            TestbedConfig::Rosenbrock { .. } => Testbed::Rosenbrock,
            TestbedConfig::Valley { .. } => Testbed::Valley,
            TestbedConfig::Quadratic { coefficients, .. } => Testbed::Quadratic(Quadratic {
                coefficients: coefficients.clone(),
            }),
            TestbedConfig::Mlp { layers, data } => {
                let mlp = TinyMlp::new(layers.clone()).map_err(config_err)?;
                let data = SyntheticDataset::generate(data).map_err(config_err)?;
                Testbed::Mlp(MlpTask::new(mlp, data).map_err(config_err)?)
            }
        };
        let optimum = testbed.objective().optimum();
        Ok(Self {
            cfg: cfg.clone(),
            testbed,
            optimum,
            inject_at: cfg.forgetting.map(|f| f.t_b),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Disables or moves the held-out batch injection.
    pub fn set_injection(&mut self, t_b: Option<u64>) {
        self.inject_at = t_b;
    }

    pub fn initial_state(&self) -> Result<RunState> {
        let theta = match (&self.cfg.testbed, &self.testbed) {
            (_, Testbed::Mlp(task)) => task.mlp.init(&mut Rng::derive(self.cfg.seed, STREAM_INIT)),
            (TestbedConfig::Rosenbrock { start }, _)
            | (TestbedConfig::Valley { start }, _)
            | (TestbedConfig::Quadratic { start, .. }, _) => ParamVec::new(start.clone()),
            (TestbedConfig::Mlp { .. }, _) => unreachable!("mlp config builds an mlp testbed"),
        };
        let mut optimizer = self.cfg.optimizer.build(theta.len())?;
        if let Some(p) = &self.cfg.preseed {
            optimizer.preseed_momentum(&ParamVec::new(p.clone()))?;
        }
        Ok(RunState { theta, optimizer })
    }

    /// Loss on the held-out batch, for the MLP testbed.
    pub fn heldout_loss(&self, theta: &ParamVec<f64>) -> Result<Option<f64>> {
        match &self.testbed {
            Testbed::Mlp(task) => Ok(Some(task.loss(theta, Some(task.data.heldout_batch()))?)),
            _ => Ok(None),
        }
    }

    /// Evaluation loss: the full objective, or the eval split for the MLP.
    pub fn eval_loss(&self, theta: &ParamVec<f64>) -> Result<f64> {
        self.testbed.objective().loss(theta, None)
    }

    fn batch(&self, t: u64) -> Option<Vec<usize>> {
        match &self.testbed {
            Testbed::Mlp(task) if self.inject_at == Some(t) => {
                Some(task.data.heldout_batch().to_vec())
            }
            Testbed::Mlp(task) => Some(task.data.batch_for_step(t)),
            _ => None,
        }
    }

    fn maybe_switch(&self, state: &mut RunState) -> Result<()> {
        let Some(sw) = &self.cfg.switch else {
            return Ok(());
        };
        let done = state.step();
        if done != sw.at || state.optimizer.kind() != self.cfg.optimizer.kind() {
            return Ok(());
        }
        state.optimizer = match (&state.optimizer, sw.to, &self.cfg.optimizer) {
            (OptimizerState::AdamW(a), SwitchTarget::Ademamix, OptimizerConfig::Adamw(h)) => {
                let hyper = self.cfg.switch_hyper(h, sw);
                switch_to_ademamix(a.clone(), done, hyper)?.into()
            }
            (OptimizerState::AdEMAMix(a), SwitchTarget::Adamw, _) => {
                switch_to_adamw(a.clone(), done)?.into()
            }
            _ => return Err(Error::config("switch direction does not match the optimizer")),
        };
        Ok(())
    }

    /// Takes step `state.step() + 1`. `Ok(None)` means the step diverged.
    fn step_once(&self, state: &mut RunState) -> Result<Option<Row>> {
        self.maybe_switch(state)?;
        let t = state.step() + 1;
        let batch = self.batch(t);
        let objective = self.testbed.objective();
        let (_, mut grad) = objective.loss_grad(&state.theta, batch.as_deref())?;
        if !grad.is_finite() {
            return Ok(None);
        }
        if let Some(c) = self.cfg.clip {
            grad = grad.global_norm_clip(c)?;
        }
        let scalars = state.optimizer.scheduled(self.cfg.lr.value_at(t));
        let before = state.theta.clone();
        match state.optimizer.step(&mut state.theta, &grad, &scalars) {
            Ok(()) => {}
            Err(Error::Diverged { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
        if !state.theta.is_finite() {
            return Ok(None);
        }

        if t % self.cfg.record_every() != 0 {
            return Ok(Some(Row {
                step: t,
                loss: f64::NAN,
                distance_to_optimum: None,
                eta: scalars.eta,
                alpha: scalars.alpha,
                beta3: scalars.beta3,
                update_norm: 0.0,
                heldout_loss: None,
                params: None,
            }));
        }
        let loss = self.eval_loss(&state.theta)?;
        let heldout_loss = self.heldout_loss(&state.theta)?;
        if !loss.is_finite() || heldout_loss.is_some_and(|h| !h.is_finite()) {
            return Ok(None);
        }
        let distance_to_optimum = match &self.optimum {
            Some(opt) => Some(state.theta.sub(opt)?.l2_norm()),
            None => None,
        };
        Ok(Some(Row {
            step: t,
            loss,
            distance_to_optimum,
            eta: scalars.eta,
            alpha: scalars.alpha,
            beta3: scalars.beta3,
            update_norm: state.theta.sub(&before)?.l2_norm(),
            heldout_loss,
            params: self.cfg.record_params.then(|| state.theta.as_slice().to_vec()),
        }))
    }

    /// Advances `state` until `until` steps have completed, appending
    /// recorded rows to `record`. Stops early on divergence.
    pub fn advance(&self, state: &mut RunState, until: u64, record: &mut RunRecord) -> Result<()> {
        let until = until.min(self.cfg.steps);
        let every = self.cfg.record_every();
        while record.status == RunStatus::Completed && state.step() < until {
            let t = state.step() + 1;
            match self.step_once(state)? {
                Some(row) if t % every == 0 => record.rows.push(row),
                Some(_) => {}
                None => record.status = RunStatus::Diverged { step: t },
            }
        }
        Ok(())
    }

    pub fn run(&self) -> Result<RunRecord> {
        let mut state = self.initial_state()?;
        let mut record = RunRecord::empty();
        self.advance(&mut state, self.cfg.steps, &mut record)?;
        Ok(record)
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Runs `cfg.steps` steps from scratch. Invalid configs fail before any step.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    Runner::new(cfg)?.run()
}

/// Runs the first `split` steps and returns the partial record together with
/// the state needed to continue.
pub fn run_until(cfg: &ExperimentConfig, split: u64) -> Result<(RunRecord, RunState)> {
    let runner = Runner::new(cfg)?;
    let mut state = runner.initial_state()?;
    let mut record = RunRecord::empty();
    runner.advance(&mut state, split, &mut record)?;
    Ok((record, state))
}

/// Continues a run from `state` to `cfg.steps`, returning only the new rows.
pub fn resume(cfg: &ExperimentConfig, mut state: RunState) -> Result<RunRecord> {
    let runner = Runner::new(cfg)?;
    if state.theta.len() != cfg.testbed.dim() {
        return Err(Error::LengthMismatch {
            expected: cfg.testbed.dim(),
            actual: state.theta.len(),
        });
    }
    let mut record = RunRecord::empty();
    runner.advance(&mut state, cfg.steps, &mut record)?;
    Ok(record)
}
