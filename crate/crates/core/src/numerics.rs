//! Flat parameter vectors, deterministic random streams and gradient clipping.

use std::ops::{Deref, Index, IndexMut};

use rand::seq::index;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Contiguous, fixed-length buffer of reals.
///
/// Parameters, gradients and every optimizer moment buffer are stored as one
/// of these. The length never changes after construction; all binary
/// operations require equal lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVec<F> {
    data: Vec<F>,
}

impl<F: Scalar> ParamVec<F> {
    pub fn new(data: Vec<F>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![F::zero(); len],
        }
    }

    pub fn filled(len: usize, value: F) -> Self {
        Self {
            data: vec![value; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    pub fn check_len(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }

    /// `ca * self + cb * other`, elementwise.
    pub fn fma(&self, ca: F, other: &Self, cb: F) -> Result<Self> {
        self.check_len(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| ca * a + cb * b)
            .collect())
    }

    /// In-place EMA update `self <- decay * self + (1 - decay) * sample`.
    pub fn ema_update(&mut self, decay: F, sample: &Self) -> Result<()> {
        self.check_len(sample)?;
        let keep = F::one() - decay;
        for (m, &g) in self.data.iter_mut().zip(&sample.data) {
            *m = decay * *m + keep * g;
        }
        Ok(())
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect())
    }

    pub fn scale(&self, c: F) -> Self {
        self.data.iter().map(|&a| a * c).collect()
    }

    pub fn dot(&self, other: &Self) -> Result<F> {
        self.check_len(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(F::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn l2_norm(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |acc, &a| acc + a * a)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rescales so that the Euclidean norm does not exceed `max_norm`.
    ///
    /// Vectors already inside the ball are returned unchanged. The rescaled
    /// output is guaranteed to measure `<= max_norm` under [`Self::l2_norm`],
    /// so clipping twice is a bitwise no-op.
    pub fn global_norm_clip(&self, max_norm: F) -> Result<Self> {
        if !(max_norm > F::zero()) {
            return Err(Error::invalid(format!(
                "max_norm must be positive, got {max_norm}"
            )));
        }
        if !self.is_finite() {
            return Err(Error::Diverged { step: 0 });
        }
        let norm = self.l2_norm();
        if norm <= max_norm {
            return Ok(self.clone());
        }
        let mut factor = max_norm / norm;
        let shrink = F::one() - F::epsilon();
        loop {
            let clipped = self.scale(factor);
            if clipped.l2_norm() <= max_norm {
                return Ok(clipped);
            }
            factor = factor * shrink;
        }
    }
}

impl<F> Deref for ParamVec<F> {
    type Target = [F];

    fn deref(&self) -> &[F] {
        &self.data
    }
}

impl<F> Index<usize> for ParamVec<F> {
    type Output = F;

    fn index(&self, i: usize) -> &F {
        &self.data[i]
    }
}

impl<F> IndexMut<usize> for ParamVec<F> {
    fn index_mut(&mut self, i: usize) -> &mut F {
        &mut self.data[i]
    }
}

impl<F> FromIterator<F> for ParamVec<F> {
    fn from_iter<I: IntoIterator<Item = F>>(iter: I) -> Self {
        Self {
            data: iter.into_iter().collect(),
        }
    }
}

impl<F> From<Vec<F>> for ParamVec<F> {
    fn from(data: Vec<F>) -> Self {
        Self { data }
    }
}

/// Free-function form of [`ParamVec::fma`].
pub fn elementwise_fma<F: Scalar>(
    a: &ParamVec<F>,
    ca: F,
    b: &ParamVec<F>,
    cb: F,
) -> Result<ParamVec<F>> {
    a.fma(ca, b, cb)
}

pub fn l2_norm<F: Scalar>(a: &ParamVec<F>) -> F {
    a.l2_norm()
}

pub fn global_norm_clip<F: Scalar>(g: &ParamVec<F>, max_norm: F) -> Result<ParamVec<F>> {
    g.global_norm_clip(max_norm)
}

/// Seeded random stream.
///
/// Backed by ChaCha8, a counter-based generator whose output is specified
/// bit-for-bit and therefore identical on every platform. Independent
/// sub-streams are addressed with [`Rng::derive`] through ChaCha's 64-bit
/// stream id, so e.g. "the batch for step `t`" can be drawn without replaying
/// earlier steps.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `stream` of the generator family rooted at `seed`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `amount` distinct indices from `0..len`, in sampling order.
    pub fn sample_indices(&mut self, len: usize, amount: usize) -> Vec<usize> {
        index::sample(&mut self.inner, len, amount.min(len)).into_vec()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}
