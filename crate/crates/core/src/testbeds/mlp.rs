use crate::error::{Error, Result};
use crate::numerics::{ParamVec, Rng};
use crate::scalar::Scalar;

use super::data::SyntheticDataset;
use super::Objective;

/// Fully connected network, tanh on hidden layers, linear output.
///
/// Parameters are flattened layer by layer as `W` (row-major, `out x in`)
/// followed by `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TinyMlp {
    dims: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Default for TinyMlp {
    fn default() -> Self {
        Self {
            dims: vec![16, 64, 64, 1],
        }
    }
}

impl TinyMlp {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(format!(
                "MLP needs >= 2 non-zero layer sizes, got {dims:?}"
            )));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn layers(&self) -> Vec<Layer> {
        let mut offset = 0;
        self.dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let layer = Layer {
                    w: offset,
                    b: offset + fan_in * fan_out,
                    fan_in,
                    fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                layer
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Weights drawn from `N(0, 1/fan_in)`, zero biases.
    pub fn init<F: Scalar>(&self, rng: &mut Rng) -> ParamVec<F> {
        let mut theta = ParamVec::zeros(self.param_count());
        for layer in self.layers() {
            let std = (layer.fan_in as f64).sqrt().recip();
            for k in 0..layer.fan_in * layer.fan_out {
                theta[layer.w + k] = F::lit(std * rng.normal());
            }
        }
        theta
    }

    fn check_theta<F: Scalar>(&self, theta: &ParamVec<F>) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                expected: self.param_count(),
                actual: theta.len(),
            });
        }
        Ok(())
    }

    /// Per-layer pre-activations and activations for one input.
    fn forward_trace<F: Scalar>(&self, theta: &ParamVec<F>, x: &[F]) -> (Vec<Vec<F>>, Vec<Vec<F>>) {
        let layers = self.layers();
        let mut pre = Vec::with_capacity(layers.len());
        let mut act = Vec::with_capacity(layers.len() + 1);
        act.push(x.to_vec());
        for (l, layer) in layers.iter().enumerate() {
            let input = &act[l];
            let z: Vec<F> = (0..layer.fan_out)
                .map(|o| {
                    let row = &theta.as_slice()[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
                    row.iter()
                        .zip(input)
                        .fold(theta[layer.b + o], |acc, (&w, &a)| acc + w * a)
                })
                .collect();
            let a = if l + 1 == layers.len() {
                z.clone()
            } else {
                z.iter().map(|v| v.tanh()).collect()
            };
            pre.push(z);
            act.push(a);
        }
        (pre, act)
    }

    pub fn pre_activations<F: Scalar>(&self, theta: &ParamVec<F>, x: &[F]) -> Result<Vec<Vec<F>>> {
        self.check_theta(theta)?;
        self.check_input(x)?;
        Ok(self.forward_trace(theta, x).0)
    }

    pub fn forward<F: Scalar>(&self, theta: &ParamVec<F>, x: &[F]) -> Result<Vec<F>> {
        self.check_theta(theta)?;
        self.check_input(x)?;
        Ok(self.forward_trace(theta, x).1.pop().unwrap())
    }

    fn check_input<F>(&self, x: &[F]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Mean squared error over `samples` (mean over samples and outputs).
    pub fn mse<'a, F: Scalar>(
        &self,
        theta: &ParamVec<F>,
        samples: impl IntoIterator<Item = (&'a [F], &'a [F])>,
    ) -> Result<F> {
        self.check_theta(theta)?;
        let (mut total, mut n) = (F::zero(), 0usize);
        for (x, target) in samples {
            self.check_input(x)?;
            let y = self.forward_trace(theta, x).1.pop().unwrap();
            total += squared_error(&y, target)?;
            n += 1;
        }
        Ok(mean(total, n))
    }

    /// MSE and its gradient by backpropagation.
    pub fn mse_grad<'a, F: Scalar>(
        &self,
        theta: &ParamVec<F>,
        samples: impl IntoIterator<Item = (&'a [F], &'a [F])>,
    ) -> Result<(F, ParamVec<F>)> {
        self.check_theta(theta)?;
        let layers = self.layers();
        let mut grad = ParamVec::zeros(theta.len());
        let (mut total, mut n) = (F::zero(), 0usize);
        let out_scale = F::lit(2.0) / F::from_usize(self.output_dim()).unwrap();
        for (x, target) in samples {
            self.check_input(x)?;
            let (_, act) = self.forward_trace(theta, x);
            let y = act.last().unwrap();
            total += squared_error(y, target)?;
            n += 1;
            let mut delta: Vec<F> = y
                .iter()
                .zip(target)
                .map(|(&yo, &to)| out_scale * (yo - to))
                .collect();
            for (l, layer) in layers.iter().enumerate().rev() {
                let input = &act[l];
                for o in 0..layer.fan_out {
                    let d = delta[o];
                    grad[layer.b + o] += d;
                    let row = layer.w + o * layer.fan_in;
                    for (k, &a) in input.iter().enumerate() {
                        grad[row + k] += d * a;
                    }
                }
                if l > 0 {
                    delta = (0..layer.fan_in)
                        .map(|k| {
                            let back = (0..layer.fan_out).fold(F::zero(), |acc, o| {
                                acc + theta[layer.w + o * layer.fan_in + k] * delta[o]
                            });
                            back * (F::one() - input[k] * input[k])
                        })
                        .collect();
                }
            }
        }
        if n > 0 {
            let inv = F::from_usize(n).unwrap().recip();
            grad.as_mut_slice().iter_mut().for_each(|g| *g *= inv);
        }
        Ok((mean(total, n), grad))
    }
}

fn squared_error<F: Scalar>(y: &[F], target: &[F]) -> Result<F> {
    if y.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: target.len(),
        });
    }
    let sum = y
        .iter()
        .zip(target)
        .fold(F::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok(sum / F::from_usize(y.len()).unwrap())
}

fn mean<F: Scalar>(total: F, n: usize) -> F {
    if n == 0 {
        F::zero()
    } else {
        total / F::from_usize(n).unwrap()
    }
}

/// A [`TinyMlp`] regressing a [`SyntheticDataset`].
#[derive(Debug, Clone)]
pub struct MlpTask<F> {
    pub mlp: TinyMlp,
    pub data: SyntheticDataset<F>,
}

impl<F: Scalar> MlpTask<F> {
    pub fn new(mlp: TinyMlp, data: SyntheticDataset<F>) -> Result<Self> {
        if mlp.input_dim() != data.input_dim() || mlp.output_dim() != data.output_dim() {
            return Err(Error::invalid(format!(
                "MLP {:?} does not fit data with {} inputs / {} outputs",
                mlp.dims(),
                data.input_dim(),
                data.output_dim()
            )));
        }
        Ok(Self { mlp, data })
    }
}

impl<F: Scalar> Objective<F> for MlpTask<F> {
    fn dim(&self) -> usize {
        self.mlp.param_count()
    }

    fn loss(&self, theta: &ParamVec<F>, batch: Option<&[usize]>) -> Result<F> {
        match batch {
            Some(idx) => self.mlp.mse(theta, self.data.samples(idx)?),
            None => self.mlp.mse(theta, self.data.eval_samples()),
        }
    }

    fn loss_grad(&self, theta: &ParamVec<F>, batch: Option<&[usize]>) -> Result<(F, ParamVec<F>)> {
        match batch {
            Some(idx) => self.mlp.mse_grad(theta, self.data.samples(idx)?),
            None => self.mlp.mse_grad(theta, self.data.eval_samples()),
        }
    }
}
