//! Helpers for the 2D trajectory experiments.

use rayon::prelude::*;

use crate::error::Result;
use crate::optimizers::{AdEMAMixHyper, AdamWHyper};
use crate::schedulers::ScheduleSpec;

use super::config::{ExperimentConfig, OptimizerConfig, TestbedConfig};
use super::run::{run_experiment, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Toy {
    Rosenbrock,
    Valley,
}

impl Toy {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "rosenbrock" => Some(Toy::Rosenbrock),
            "valley" => Some(Toy::Valley),
            _ => None,
        }
    }

    pub fn testbed(self) -> TestbedConfig {
        match self {
            Toy::Rosenbrock => TestbedConfig::Rosenbrock {
                start: vec![-3.0, 5.0],
            },
            Toy::Valley => TestbedConfig::Valley {
                start: vec![0.3, 1.5],
            },
        }
    }
}

/// Constant learning rate, every step recorded with its iterate.
pub fn toy_config(toy: Toy, optimizer: OptimizerConfig, lr: f64, steps: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed: 0,
        steps,
        record_every: Some(1),
        clip: None,
        constant_after: false,
        record_params: true,
        output: None,
        preseed: None,
        testbed: toy.testbed(),
        optimizer,
        lr: ScheduleSpec::Constant { value: lr },
        switch: None,
        forgetting: None,
    }
}

pub fn adam(beta1: f64, beta2: f64) -> OptimizerConfig {
    OptimizerConfig::Adamw(AdamWHyper {
        beta1,
        beta2,
        ..AdamWHyper::default()
    })
}

pub fn ademamix(beta1: f64, beta2: f64, beta3: f64, alpha: f64) -> OptimizerConfig {
    OptimizerConfig::Ademamix(AdEMAMixHyper {
        beta1,
        beta2,
        beta3,
        alpha,
        ..AdEMAMixHyper::default()
    })
}

/// Recorded iterates, in step order.
pub fn trajectory(record: &RunRecord) -> Vec<Vec<f64>> {
    record.rows.iter().filter_map(|r| r.params.clone()).collect()
}

/// Sign changes between consecutive non-zero increments of `xs`.
pub fn oscillation_count(xs: &[f64]) -> usize {
    let mut count = 0;
    let mut prev = 0.0f64;
    for w in xs.windows(2) {
        let d = w[1] - w[0];
        if d == 0.0 {
            continue;
        }
        if prev != 0.0 && (d > 0.0) != (prev > 0.0) {
            count += 1;
        }
        prev = d;
    }
    count
}

/// Oscillation count of one coordinate along the recorded trajectory,
/// starting from `start`.
pub fn coordinate_oscillations(record: &RunRecord, start: &[f64], coord: usize) -> usize {
    let mut xs = vec![start[coord]];
    xs.extend(trajectory(record).iter().map(|p| p[coord]));
    oscillation_count(&xs)
}

/// Final distance to the optimum; infinite for diverged or empty runs.
pub fn final_distance(record: &RunRecord) -> f64 {
    if record.diverged() {
        return f64::INFINITY;
    }
    record
        .last()
        .and_then(|r| r.distance_to_optimum)
        .unwrap_or(f64::INFINITY)
}

/// Smallest distance to the optimum reached at any recorded step.
pub fn closest_approach(record: &RunRecord) -> f64 {
    record
        .rows
        .iter()
        .filter_map(|r| r.distance_to_optimum)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct LrSweepBest {
    pub lr: f64,
    pub final_distance: f64,
    pub record: RunRecord,
}

/// Runs `base` at every learning rate and keeps the best final distance.
/// Ties keep the earlier learning rate.
pub fn best_over_lr(base: &ExperimentConfig, lrs: &[f64]) -> Result<LrSweepBest> {
    let runs = lrs
        .par_iter()
        .map(|&lr| {
            let mut cfg = base.clone();
            cfg.lr = ScheduleSpec::Constant { value: lr };
            run_experiment(&cfg).map(|r| (lr, final_distance(&r), r))
        })
        .collect::<Result<Vec<_>>>()?;
    let (lr, final_distance, record) = runs
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("at least one learning rate");
    Ok(LrSweepBest {
        lr,
        final_distance,
        record,
    })
}
