//! Experiment configuration and its TOML text form.
//!
//! A config is a TOML document with a handful of top-level keys and one
//! table per component:
//!
//! ```toml
//! seed = 7
//! steps = 5000
//! # record_every = 1        (defaults: 1 on 2D toys, 10 on the MLP)
//! # clip = 1.0              (global-norm clipping of every gradient)
//! # constant_after = false  (allow schedule horizons past `steps`)
//! # record_params = false   (store θ on every recorded row)
//! # preseed = [-3.0, 0.0]   (initial value of every first-moment buffer)
//!
//! [testbed]
//! kind = "rosenbrock"       # rosenbrock | valley | quadratic | mlp
//! start = [-3.0, 5.0]
//!
//! [optimizer]
//! kind = "ademamix"         # adamw | ademamix | lion | admeta_s | aggmo | ad3emamix
//! beta3 = 0.999
//! alpha = 9.0
//!
//! [lr]
//! kind = "constant"         # any schedule kind
//! value = 0.01
//!
//! [switch]                  # optional
//! at = 200
//! to = "ademamix"           # or "adamw"
//!
//! [forgetting]              # optional, MLP only
//! t_b = 300
//! ```
//!
//! Dotted keys (`optimizer.alpha = 9.0`) are equivalent to the table form.
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{
    Ad3EMAMix, Ad3EMAMixHyper, AdEMAMix, AdEMAMixHyper, AdMetaS, AdMetaSHyper, AdamW,
    AdamWHyper, AggMo, AggMoHyper, Lion, LionHyper, OptimizerKind, OptimizerState,
};
use crate::schedulers::ScheduleSpec;
use crate::testbeds::DatasetSpec;

/// Name of the environment variable overriding [`ExperimentConfig::seed`].
pub const SEED_ENV: &str = "EMX_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub constant_after: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub record_params: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preseed: Option<Vec<f64>>,
    pub testbed: TestbedConfig,
    pub optimizer: OptimizerConfig,
    pub lr: ScheduleSpec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<SwitchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forgetting: Option<ForgettingConfig>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestbedConfig {
    Rosenbrock {
        #[serde(default = "rosenbrock_start")]
        start: Vec<f64>,
    },
    Valley {
        #[serde(default = "valley_start")]
        start: Vec<f64>,
    },
    Quadratic {
        coefficients: Vec<f64>,
        start: Vec<f64>,
    },
    Mlp {
        #[serde(default = "mlp_layers")]
        layers: Vec<usize>,
        #[serde(default)]
        data: DatasetSpec,
    },
}

fn rosenbrock_start() -> Vec<f64> {
    vec![-3.0, 5.0]
}

fn valley_start() -> Vec<f64> {
    vec![0.3, 1.5]
}

fn mlp_layers() -> Vec<usize> {
    vec![16, 64, 64, 1]
}

impl TestbedConfig {
    pub fn is_mlp(&self) -> bool {
        matches!(self, TestbedConfig::Mlp { .. })
    }

    /// Parameter count implied by the testbed.
    pub fn dim(&self) -> usize {
        match self {
            TestbedConfig::Rosenbrock { start } | TestbedConfig::Valley { start } => start.len(),
            TestbedConfig::Quadratic { start, .. } => start.len(),
            TestbedConfig::Mlp { layers, .. } => layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adamw(AdamWHyper<f64>),
    Ademamix(AdEMAMixHyper<f64>),
    Lion(LionHyper<f64>),
    AdmetaS(AdMetaSHyper<f64>),
    Aggmo(AggMoHyper<f64>),
    Ad3emamix(Ad3EMAMixHyper<f64>),
}

impl OptimizerConfig {
    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerConfig::Adamw(_) => OptimizerKind::Adamw,
            OptimizerConfig::Ademamix(_) => OptimizerKind::Ademamix,
            OptimizerConfig::Lion(_) => OptimizerKind::Lion,
            OptimizerConfig::AdmetaS(_) => OptimizerKind::AdmetaS,
            OptimizerConfig::Aggmo(_) => OptimizerKind::Aggmo,
            OptimizerConfig::Ad3emamix(_) => OptimizerKind::Ad3emamix,
        }
    }

    pub fn build(&self, len: usize) -> Result<OptimizerState<f64>> {
        Ok(match self {
            OptimizerConfig::Adamw(h) => AdamW::new(len, *h)?.into(),
            OptimizerConfig::Ademamix(h) => AdEMAMix::new(len, *h)?.into(),
            OptimizerConfig::Lion(h) => Lion::new(len, *h)?.into(),
            OptimizerConfig::AdmetaS(h) => AdMetaS::new(len, *h)?.into(),
            OptimizerConfig::Aggmo(h) => AggMo::new(len, h.clone())?.into(),
            OptimizerConfig::Ad3emamix(h) => Ad3EMAMix::new(len, *h)?.into(),
        })
    }

    /// Longest α/β warmup horizon.
    fn horizon(&self) -> u64 {
        match self {
            OptimizerConfig::Ademamix(h) => h.t_alpha.max(h.t_beta3),
            OptimizerConfig::Ad3emamix(h) => h.t_alpha.max(h.t_beta3),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchTarget {
    Adamw,
    Ademamix,
}

/// Converts the running optimizer once `at` steps have completed.
///
/// Switching to AdEMAMix takes `beta1`, `beta2`, `eps` and weight decay from
/// the running AdamW; the remaining fields configure the new slow EMA and
/// its schedulers, whose clock starts at the switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    pub at: u64,
    pub to: SwitchTarget,
    #[serde(default = "default_switch_alpha")]
    pub alpha: f64,
    #[serde(default = "default_switch_beta3")]
    pub beta3: f64,
    #[serde(default)]
    pub t_alpha: u64,
    #[serde(default)]
    pub t_beta3: u64,
}

fn default_switch_alpha() -> f64 {
    8.0
}

fn default_switch_beta3() -> f64 {
    0.9999
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgettingConfig {
    /// Step at which the held-out batch replaces the scheduled batch.
    pub t_b: u64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Applies the `EMX_SEED` override when it is set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    pub fn record_every(&self) -> u64 {
        self.record_every
            .unwrap_or(if self.testbed.is_mlp() { 10 } else { 1 })
    }

    /// Checks everything that can be checked without taking a step.
    pub fn validate(&self) -> Result<()> {
        if self.record_every == Some(0) {
            return Err(Error::config("record_every must be >= 1"));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config(format!("clip must be positive and finite, got {c}")));
            }
        }
        self.validate_testbed()?;
        let dim = self.testbed.dim();
        self.optimizer
            .build(dim)
            .map_err(|e| Error::config(format!("optimizer: {e}")))?;
        self.lr
            .validate()
            .map_err(|e| Error::config(format!("lr: {e}")))?;
        if let Some(p) = &self.preseed {
            if p.len() != dim {
                return Err(Error::config(format!(
                    "preseed has {} entries, testbed has {dim} parameters",
                    p.len()
                )));
            }
        }

        let mut horizons = vec![("lr", self.lr.horizon()), ("optimizer", self.optimizer.horizon())];
        if let Some(sw) = &self.switch {
            self.validate_switch(sw)?;
            if sw.to == SwitchTarget::Ademamix {
                horizons.push(("switch", sw.at + sw.t_alpha.max(sw.t_beta3)));
            }
        }
        if !self.constant_after {
            for (what, h) in horizons {
                if h > self.steps {
                    return Err(Error::config(format!(
                        "{what} schedule horizon {h} exceeds steps = {} (set constant_after = true to allow)",
                        self.steps
                    )));
                }
            }
        }

        if let Some(f) = &self.forgetting {
            if !self.testbed.is_mlp() {
                return Err(Error::config("forgetting requires the mlp testbed"));
            }
            if f.t_b == 0 || f.t_b >= self.steps {
                return Err(Error::config(format!(
                    "forgetting.t_b must satisfy 1 <= t_b < steps = {}, got {}",
                    self.steps, f.t_b
                )));
            }
        }
        Ok(())
    }

    fn validate_testbed(&self) -> Result<()> {
        match &self.testbed {
            TestbedConfig::Rosenbrock { start } | TestbedConfig::Valley { start } => {
                if start.len() != 2 {
                    return Err(Error::config(format!(
                        "2D testbed needs a 2-element start, got {}",
                        start.len()
                    )));
                }
            }
            TestbedConfig::Quadratic {
                coefficients,
                start,
            } => {
                if coefficients.len() != start.len() || start.is_empty() {
                    return Err(Error::config(
                        "quadratic needs matching non-empty coefficients and start",
                    ));
                }
            }
            TestbedConfig::Mlp { layers, data } => {
                if layers.len() < 2 || layers.contains(&0) {
                    return Err(Error::config("mlp layers need >= 2 non-zero widths"));
                }
                if layers[0] != data.input_dim || layers[layers.len() - 1] != data.output_dim {
                    return Err(Error::config(format!(
                        "mlp layers {layers:?} do not match data dims {} -> {}",
                        data.input_dim, data.output_dim
                    )));
                }
                if data.batch_size == 0 || data.n_train < 2 * data.batch_size {
                    return Err(Error::config(
                        "data needs batch_size >= 1 and n_train >= 2 * batch_size",
                    ));
                }
            }
        }
        if let Some(start) = self.start_point() {
            if start.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("start point must be finite"));
            }
        }
        Ok(())
    }

    fn validate_switch(&self, sw: &SwitchConfig) -> Result<()> {
        let from = self.optimizer.kind();
        let ok = matches!(
            (from, sw.to),
            (OptimizerKind::Adamw, SwitchTarget::Ademamix)
                | (OptimizerKind::Ademamix, SwitchTarget::Adamw)
        );
        if !ok {
            return Err(Error::config(format!(
                "cannot switch from {} to {:?}",
                from.name(),
                sw.to
            )));
        }
        if sw.at > self.steps {
            return Err(Error::config(format!(
                "switch.at = {} exceeds steps = {}",
                sw.at, self.steps
            )));
        }
        if let (OptimizerConfig::Adamw(h), SwitchTarget::Ademamix) = (&self.optimizer, sw.to) {
            self.switch_hyper(h, sw)
                .validate()
                .map_err(|e| Error::config(format!("switch: {e}")))?;
        }
        Ok(())
    }

    pub(crate) fn switch_hyper(&self, h: &AdamWHyper<f64>, sw: &SwitchConfig) -> AdEMAMixHyper<f64> {
        AdEMAMixHyper {
            beta1: h.beta1,
            beta2: h.beta2,
            beta3: sw.beta3,
            alpha: sw.alpha,
            eps: h.eps,
            weight_decay: h.weight_decay,
            t_alpha: sw.t_alpha,
            t_beta3: sw.t_beta3,
            beta_start: None,
            ..AdEMAMixHyper::default()
        }
    }

    fn start_point(&self) -> Option<&[f64]> {
        match &self.testbed {
            TestbedConfig::Rosenbrock { start }
            | TestbedConfig::Valley { start }
            | TestbedConfig::Quadratic { start, .. } => Some(start),
            TestbedConfig::Mlp { .. } => None,
        }
    }
}
