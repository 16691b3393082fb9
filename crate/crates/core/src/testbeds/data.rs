use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamVec, Rng};
use crate::scalar::Scalar;

use super::mlp::TinyMlp;

// Sub-stream ids under the dataset seed.
const STREAM_INPUTS: u64 = 1;
const STREAM_TEACHER: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_HELDOUT: u64 = 4;
const STREAM_EVAL: u64 = 5;
const STREAM_BATCH_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_eval: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub teacher_hidden: Vec<usize>,
    pub noise: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_train: 2048,
            n_eval: 256,
            input_dim: 16,
            output_dim: 1,
            teacher_hidden: vec![32],
            noise: 0.05,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Regression data from a fixed random teacher network plus Gaussian noise.
///
/// One batch-sized subset of the training samples is reserved as the
/// held-out batch and never appears in [`Self::batch_for_step`].
#[derive(Debug, Clone)]
pub struct SyntheticDataset<F> {
    inputs: Vec<Vec<F>>,
    targets: Vec<Vec<F>>,
    eval_inputs: Vec<Vec<F>>,
    eval_targets: Vec<Vec<F>>,
    heldout: Vec<usize>,
    pool: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl<F: Scalar> SyntheticDataset<F> {
    pub fn generate(spec: &DatasetSpec) -> Result<Self> {
        if spec.batch_size == 0 || spec.n_train < 2 * spec.batch_size {
            return Err(Error::invalid(format!(
                "need batch_size >= 1 and n_train >= 2 * batch_size, got {} / {}",
                spec.batch_size, spec.n_train
            )));
        }
        if !(spec.noise >= 0.0) {
            return Err(Error::invalid("noise must be >= 0"));
        }
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.teacher_hidden);
        dims.push(spec.output_dim);
        let teacher = TinyMlp::new(dims)?;
        let teacher_theta: ParamVec<F> = teacher.init(&mut Rng::derive(spec.seed, STREAM_TEACHER));

        let draw = |n: usize, stream: u64, noise_stream: u64| -> Result<(Vec<Vec<F>>, Vec<Vec<F>>)> {
            let mut rng = Rng::derive(spec.seed, stream);
            let mut noise = Rng::derive(spec.seed, noise_stream);
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: Vec<F> = (0..spec.input_dim).map(|_| F::lit(rng.normal())).collect();
                let mut y = teacher.forward(&teacher_theta, &x)?;
                for v in &mut y {
                    *v += F::lit(spec.noise * noise.normal());
                }
                xs.push(x);
                ys.push(y);
            }
            Ok((xs, ys))
        };
        let (inputs, targets) = draw(spec.n_train, STREAM_INPUTS, STREAM_NOISE)?;
        let (eval_inputs, eval_targets) = draw(spec.n_eval, STREAM_EVAL, STREAM_EVAL + 100)?;

        let mut heldout =
            Rng::derive(spec.seed, STREAM_HELDOUT).sample_indices(spec.n_train, spec.batch_size);
        heldout.sort_unstable();
        let pool = (0..spec.n_train)
            .filter(|i| heldout.binary_search(i).is_err())
            .collect();
        Ok(Self {
            inputs,
            targets,
            eval_inputs,
            eval_targets,
            heldout,
            pool,
            batch_size: spec.batch_size,
            seed: spec.seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn output_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    /// Indices of the reserved batch.
    pub fn heldout_batch(&self) -> &[usize] {
        &self.heldout
    }

    /// Training batch for step `t`: a pure function of `(seed, t)` drawn
    /// from the pool that excludes the held-out batch.
    pub fn batch_for_step(&self, t: u64) -> Vec<usize> {
        let mut rng = Rng::derive(self.seed, STREAM_BATCH_BASE.wrapping_add(t));
        rng.sample_indices(self.pool.len(), self.batch_size)
            .into_iter()
            .map(|k| self.pool[k])
            .collect()
    }

    pub fn samples(&self, idx: &[usize]) -> Result<Vec<(&[F], &[F])>> {
        idx.iter()
            .map(|&i| {
                if i >= self.inputs.len() {
                    return Err(Error::LengthMismatch {
                        expected: self.inputs.len(),
                        actual: i,
                    });
                }
                Ok((self.inputs[i].as_slice(), self.targets[i].as_slice()))
            })
            .collect()
    }

    pub fn eval_samples(&self) -> Vec<(&[F], &[F])> {
        self.eval_inputs
            .iter()
            .zip(&self.eval_targets)
            .map(|(x, y)| (x.as_slice(), y.as_slice()))
            .collect()
    }
}
