//! Versioned binary checkpoints for optimizer state.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "EMXCKPT1"
//! version    u32
//! n_slots    u32
//! n_slots x { name_len u32 | name (UTF-8) | count u64 | count x f64 }
//! hyper_len  u32
//! hyper      hyper_len bytes of UTF-8 "key=value" lines
//! step       u64
//! ```
//!
//! Every slot must hold the same number of elements.

use std::collections::BTreeMap;

use crate::error::{CheckpointError, Error, Result};
use crate::numerics::ParamVec;
use crate::scalar::Scalar;

use super::{
    Ad3EMAMix, Ad3EMAMixHyper, AdEMAMix, AdEMAMixHyper, AdMetaS, AdMetaSHyper, AdamW, AdamWHyper,
    AggMo, AggMoHyper, Lion, LionHyper, Mixing, OptimizerKind, OptimizerState,
};

pub const MAGIC: &[u8; 8] = b"EMXCKPT1";
pub const VERSION: u32 = 1;

/// Decoded checkpoint contents, independent of the optimizer kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub slots: Vec<(String, Vec<f64>)>,
    pub hyper: Vec<(String, String)>,
    pub step: u64,
}

impl Checkpoint {
    pub fn slot(&self, name: &str) -> Option<&[f64]> {
        self.slots
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn hyper_value(&self, key: &str) -> Option<&str> {
        self.hyper
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.slots.len() as u32).to_le_bytes());
        for (name, values) in &self.slots {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let hyper: String = self
            .hyper
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        out.extend_from_slice(&(hyper.len() as u32).to_le_bytes());
        out.extend_from_slice(hyper.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic {
                found: magic.to_vec(),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                expected: VERSION,
            });
        }
        let n_slots = r.u32("slot count")?;
        let mut slots: Vec<(String, Vec<f64>)> = Vec::new();
        for _ in 0..n_slots {
            let name_len = r.u32("slot name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "slot name")?)
                .map_err(|e| CheckpointError::Malformed(format!("slot name: {e}")))?
                .to_owned();
            let count = r.u64("slot length")?;
            let byte_len = usize::try_from(count)
                .ok()
                .and_then(|c| c.checked_mul(8))
                .ok_or(CheckpointError::Truncated { what: "slot data" })?;
            let raw = r.take(byte_len, "slot data")?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if let Some((first, v)) = slots.first() {
                if v.len() != values.len() {
                    return Err(CheckpointError::SlotLengthMismatch {
                        slot: format!("{name} (vs {first})"),
                        expected: v.len(),
                        actual: values.len(),
                    });
                }
            }
            slots.push((name, values));
        }
        let hyper_len = r.u32("hyperparameter length")? as usize;
        let text = std::str::from_utf8(r.take(hyper_len, "hyperparameters")?)
            .map_err(|e| CheckpointError::Malformed(format!("hyperparameters: {e}")))?;
        let mut hyper = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Malformed(format!("bad hyper line `{line}`")))?;
            hyper.push((k.to_owned(), v.to_owned()));
        }
        let step = r.u64("step counter")?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { slots, hyper, step })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated { what })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn widen_vec<F: Scalar>(v: &ParamVec<F>) -> Vec<f64> {
    v.iter().map(|x| x.widen()).collect()
}

fn fmt<F: Scalar>(x: F) -> String {
    format!("{:?}", x.widen())
}

struct HyperMap(BTreeMap<String, String>);

impl HyperMap {
    fn get<F: Scalar>(&self, key: &str) -> Result<F, CheckpointError> {
        let raw = self.raw(key)?;
        let v: f64 = raw
            .parse()
            .map_err(|_| CheckpointError::Malformed(format!("{key}={raw} is not a number")))?;
        Ok(F::lit(v))
    }

    fn get_u64(&self, key: &str) -> Result<u64, CheckpointError> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| CheckpointError::Malformed(format!("{key}={raw} is not an integer")))
    }

    fn get_opt<F: Scalar>(&self, key: &str) -> Result<Option<F>, CheckpointError> {
        match self.0.get(key).map(String::as_str) {
            None | Some("none") => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    fn raw(&self, key: &str) -> Result<&str, CheckpointError> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing hyperparameter `{key}`")))
    }
}

fn slot<F: Scalar>(ck: &Checkpoint, name: &str) -> Result<ParamVec<F>, CheckpointError> {
    ck.slot(name)
        .map(|v| v.iter().map(|&x| F::lit(x)).collect())
        .ok_or_else(|| CheckpointError::Malformed(format!("missing slot `{name}`")))
}

impl<F: Scalar> OptimizerState<F> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut slots = Vec::new();
        let mut hyper = vec![("kind".to_owned(), self.kind().name().to_owned())];
        let mut put = |k: &str, v: String| hyper.push((k.to_owned(), v));
        match self {
            OptimizerState::AdamW(s) => {
                slots.push(("m".into(), widen_vec(&s.m)));
                slots.push(("nu".into(), widen_vec(&s.nu)));
                put("beta1", fmt(s.hyper.beta1));
                put("beta2", fmt(s.hyper.beta2));
                put("eps", fmt(s.hyper.eps));
                put("weight_decay", fmt(s.hyper.weight_decay));
            }
            OptimizerState::AdEMAMix(s) => {
                if let Some(m1) = &s.m1 {
                    slots.push(("m1".into(), widen_vec(m1)));
                }
                slots.push(("m2".into(), widen_vec(&s.m2)));
                slots.push(("nu".into(), widen_vec(&s.nu)));
                let h = &s.hyper;
                put("beta1", fmt(h.beta1));
                put("beta2", fmt(h.beta2));
                put("beta3", fmt(h.beta3));
                put("alpha", fmt(h.alpha));
                put("eps", fmt(h.eps));
                put("weight_decay", fmt(h.weight_decay));
                put("t_alpha", h.t_alpha.to_string());
                put("t_beta3", h.t_beta3.to_string());
                put("beta_start", h.beta_start.map_or("none".into(), fmt));
                put(
                    "mixing",
                    match h.mixing {
                        Mixing::Additive => "additive",
                        Mixing::Convex => "convex",
                    }
                    .into(),
                );
                put("schedule_origin", s.schedule_origin.to_string());
            }
            OptimizerState::Lion(s) => {
                slots.push(("m".into(), widen_vec(&s.m)));
                put("alpha", fmt(s.hyper.alpha));
                put("beta", fmt(s.hyper.beta));
                put("weight_decay", fmt(s.hyper.weight_decay));
            }
            OptimizerState::AdMetaS(s) => {
                slots.push(("m1".into(), widen_vec(&s.m1)));
                slots.push(("m2".into(), widen_vec(&s.m2)));
                put("beta1", fmt(s.hyper.beta1));
                put("beta2", fmt(s.hyper.beta2));
            }
            OptimizerState::AggMo(s) => {
                for (i, b) in s.buffers.iter().enumerate() {
                    slots.push((format!("m_{}", i + 1), widen_vec(b)));
                }
                let betas: Vec<String> = s.hyper.betas.iter().map(|&b| fmt(b)).collect();
                put("betas", betas.join(","));
            }
            OptimizerState::Ad3EMAMix(s) => {
                slots.push(("m1".into(), widen_vec(&s.m1)));
                slots.push(("m2".into(), widen_vec(&s.m2)));
                slots.push(("m3".into(), widen_vec(&s.m3)));
                slots.push(("nu".into(), widen_vec(&s.nu)));
                let h = &s.hyper;
                put("beta1", fmt(h.beta1));
                put("beta2", fmt(h.beta2));
                put("beta3", fmt(h.beta3));
                put("beta4", fmt(h.beta4));
                put("alpha", fmt(h.alpha));
                put("eps", fmt(h.eps));
                put("weight_decay", fmt(h.weight_decay));
                put("t_alpha", h.t_alpha.to_string());
                put("t_beta3", h.t_beta3.to_string());
                put("beta_start", h.beta_start.map_or("none".into(), fmt));
            }
        }
        Checkpoint {
            slots,
            hyper,
            step: self.step_count(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let h = HyperMap(ck.hyper.iter().cloned().collect());
        let kind_name = h.raw("kind")?;
        let kind = OptimizerKind::from_name(kind_name).ok_or_else(|| {
            CheckpointError::Malformed(format!("unknown optimizer kind `{kind_name}`"))
        })?;
        let step = ck.step;
        let state = match kind {
            OptimizerKind::Adamw => OptimizerState::AdamW(AdamW {
                m: slot(ck, "m")?,
                nu: slot(ck, "nu")?,
                step,
                hyper: AdamWHyper {
                    beta1: h.get("beta1")?,
                    beta2: h.get("beta2")?,
                    eps: h.get("eps")?,
                    weight_decay: h.get("weight_decay")?,
                },
            }),
            OptimizerKind::Ademamix => {
                let mixing = match h.raw("mixing")? {
                    "additive" => Mixing::Additive,
                    "convex" => Mixing::Convex,
                    other => {
                        return Err(
                            CheckpointError::Malformed(format!("unknown mixing `{other}`")).into()
                        )
                    }
                };
                let hyper = AdEMAMixHyper {
                    beta1: h.get("beta1")?,
                    beta2: h.get("beta2")?,
                    beta3: h.get("beta3")?,
                    alpha: h.get("alpha")?,
                    eps: h.get("eps")?,
                    weight_decay: h.get("weight_decay")?,
                    t_alpha: h.get_u64("t_alpha")?,
                    t_beta3: h.get_u64("t_beta3")?,
                    beta_start: h.get_opt("beta_start")?,
                    mixing,
                };
                let m1 = match ck.slot("m1") {
                    Some(_) => Some(slot(ck, "m1")?),
                    None => None,
                };
                OptimizerState::AdEMAMix(AdEMAMix {
                    m1,
                    m2: slot(ck, "m2")?,
                    nu: slot(ck, "nu")?,
                    step,
                    schedule_origin: h.get_u64("schedule_origin")?,
                    hyper,
                })
            }
            OptimizerKind::Lion => OptimizerState::Lion(Lion {
                m: slot(ck, "m")?,
                step,
                hyper: LionHyper {
                    alpha: h.get("alpha")?,
                    beta: h.get("beta")?,
                    weight_decay: h.get("weight_decay")?,
                },
            }),
            OptimizerKind::AdmetaS => OptimizerState::AdMetaS(AdMetaS {
                m1: slot(ck, "m1")?,
                m2: slot(ck, "m2")?,
                step,
                hyper: AdMetaSHyper {
                    beta1: h.get("beta1")?,
                    beta2: h.get("beta2")?,
                },
            }),
            OptimizerKind::Aggmo => {
                let betas = h
                    .raw("betas")?
                    .split(',')
                    .map(|b| {
                        b.parse::<f64>()
                            .map(F::lit)
                            .map_err(|_| CheckpointError::Malformed(format!("bad beta `{b}`")))
                    })
                    .collect::<Result<Vec<F>, _>>()?;
                let buffers = (1..=betas.len())
                    .map(|i| slot(ck, &format!("m_{i}")))
                    .collect::<Result<Vec<_>, _>>()?;
                OptimizerState::AggMo(AggMo {
                    buffers,
                    step,
                    hyper: AggMoHyper { betas },
                })
            }
            OptimizerKind::Ad3emamix => OptimizerState::Ad3EMAMix(Ad3EMAMix {
                m1: slot(ck, "m1")?,
                m2: slot(ck, "m2")?,
                m3: slot(ck, "m3")?,
                nu: slot(ck, "nu")?,
                step,
                hyper: Ad3EMAMixHyper {
                    beta1: h.get("beta1")?,
                    beta2: h.get("beta2")?,
                    beta3: h.get("beta3")?,
                    beta4: h.get("beta4")?,
                    alpha: h.get("alpha")?,
                    eps: h.get("eps")?,
                    weight_decay: h.get("weight_decay")?,
                    t_alpha: h.get_u64("t_alpha")?,
                    t_beta3: h.get_u64("t_beta3")?,
                    beta_start: h.get_opt("beta_start")?,
                },
            }),
        };
        Ok(state)
    }
}

/// Serializes any optimizer state.
pub fn checkpoint_save<F: Scalar>(state: &OptimizerState<F>) -> Vec<u8> {
    state.to_checkpoint().encode()
}

/// Restores an optimizer state written by [`checkpoint_save`].
pub fn checkpoint_load<F: Scalar>(bytes: &[u8]) -> Result<OptimizerState<F>> {
    let ck = Checkpoint::decode(bytes).map_err(Error::from)?;
    OptimizerState::from_checkpoint(&ck)
}
