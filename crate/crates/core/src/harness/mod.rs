//! Config-driven runs, sweeps, switches, the forgetting protocol and
//! structured output.
//!
//! Each step of a run, in order: apply a due optimizer switch, pick the batch
//! (the held-out batch replaces the scheduled one at `t_b`), compute the
//! gradient, clip it, evaluate schedules, update, and record every
//! `record_every` steps. Runs are pure functions of their config.

pub mod config;
pub mod emit;
pub mod forgetting;
pub mod run;
pub mod sweep;
pub mod toys;

pub use config::{
    ExperimentConfig, ForgettingConfig, OptimizerConfig, SwitchConfig, SwitchTarget,
    TestbedConfig, SEED_ENV,
};
pub use emit::{emit, emit_csv, emit_jsonl, Format};
pub use forgetting::{run_forgetting_protocol, ForgettingResult};
pub use run::{resume, run_experiment, run_until, Row, RunRecord, RunState, RunStatus, Runner};
pub use sweep::{run_sweep, GridAxis, SummaryRow, SweepResult};
