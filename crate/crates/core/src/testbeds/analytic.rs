use crate::error::{Error, Result};
use crate::numerics::ParamVec;
use crate::scalar::Scalar;

use super::Objective;

fn check_dim<F: Scalar>(theta: &ParamVec<F>, dim: usize) -> Result<()> {
    if theta.len() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            actual: theta.len(),
        });
    }
    Ok(())
}

/// `(1 - x1)^2 + 100 (x2 - x1^2)^2` and its gradient.
pub fn rosenbrock<F: Scalar>(theta: &ParamVec<F>) -> Result<(F, ParamVec<F>)> {
    check_dim(theta, 2)?;
    let (x1, x2) = (theta[0], theta[1]);
    let hundred = F::lit(100.0);
    let a = F::one() - x1;
    let b = x2 - x1 * x1;
    let loss = a * a + hundred * b * b;
    let grad = ParamVec::new(vec![
        F::lit(-2.0) * a - F::lit(400.0) * x1 * b,
        F::lit(200.0) * b,
    ]);
    Ok((loss, grad))
}

/// `8 (x-1)^2 (1.3 x^2 + 2x + 1) + 0.5 (y-4)^2`: sharp along x, flat along y.
pub fn sharp_valley<F: Scalar>(theta: &ParamVec<F>) -> Result<(F, ParamVec<F>)> {
    check_dim(theta, 2)?;
    let (x, y) = (theta[0], theta[1]);
    let d = x - F::one();
    let poly = F::lit(1.3) * x * x + F::lit(2.0) * x + F::one();
    let dy = y - F::lit(4.0);
    let loss = F::lit(8.0) * d * d * poly + F::lit(0.5) * dy * dy;
    let gx = F::lit(16.0) * d * poly + F::lit(8.0) * d * d * (F::lit(2.6) * x + F::lit(2.0));
    Ok((loss, ParamVec::new(vec![gx, dy])))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

impl<F: Scalar> Objective<F> for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn loss(&self, theta: &ParamVec<F>, _batch: Option<&[usize]>) -> Result<F> {
        rosenbrock(theta).map(|(l, _)| l)
    }

    fn loss_grad(&self, theta: &ParamVec<F>, _batch: Option<&[usize]>) -> Result<(F, ParamVec<F>)> {
        rosenbrock(theta)
    }

    fn optimum(&self) -> Option<ParamVec<F>> {
        Some(ParamVec::new(vec![F::one(), F::one()]))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SharpValley;

impl<F: Scalar> Objective<F> for SharpValley {
    fn dim(&self) -> usize {
        2
    }

    fn loss(&self, theta: &ParamVec<F>, _batch: Option<&[usize]>) -> Result<F> {
        sharp_valley(theta).map(|(l, _)| l)
    }

    fn loss_grad(&self, theta: &ParamVec<F>, _batch: Option<&[usize]>) -> Result<(F, ParamVec<F>)> {
        sharp_valley(theta)
    }

    /// The minimizer `(1, 4)`. A second, shallower local minimum sits at
    /// `x = -17/26`.
    fn optimum(&self) -> Option<ParamVec<F>> {
        Some(ParamVec::new(vec![F::one(), F::lit(4.0)]))
    }
}

/// Diagonal bowl `sum_i c_i x_i^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic<F> {
    pub coefficients: Vec<F>,
}

impl<F: Scalar> Quadratic<F> {
    pub fn isotropic(dim: usize) -> Self {
        Self {
            coefficients: vec![F::one(); dim],
        }
    }
}

impl<F: Scalar> Objective<F> for Quadratic<F> {
    fn dim(&self) -> usize {
        self.coefficients.len()
    }

    fn loss(&self, theta: &ParamVec<F>, _batch: Option<&[usize]>) -> Result<F> {
        check_dim(theta, self.dim())?;
        Ok(theta
            .iter()
            .zip(&self.coefficients)
            .fold(F::zero(), |acc, (&x, &c)| acc + c * x * x))
    }

    fn loss_grad(&self, theta: &ParamVec<F>, batch: Option<&[usize]>) -> Result<(F, ParamVec<F>)> {
        let loss = self.loss(theta, batch)?;
        let two = F::lit(2.0);
        let grad = theta
            .iter()
            .zip(&self.coefficients)
            .map(|(&x, &c)| two * c * x)
            .collect();
        Ok((loss, grad))
    }

    fn optimum(&self) -> Option<ParamVec<F>> {
        Some(ParamVec::zeros(self.dim()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::testbeds::finite_difference_check;

    fn pv(v: &[f64]) -> ParamVec<f64> {
        ParamVec::new(v.to_vec())
    }

    #[test]
    fn rosenbrock_examples() {
        let (l, g) = rosenbrock(&pv(&[1.0, 1.0])).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.as_slice(), &[0.0, 0.0]);
        let (l, g) = rosenbrock(&pv(&[0.0, 0.0])).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g.as_slice(), &[-2.0, 0.0]);
        let check = finite_difference_check(&Rosenbrock, &pv(&[-3.0, 5.0]), None).unwrap();
        assert!(check.max_rel_error <= 1e-6, "{check:?}");
    }

    #[test]
    fn valley_examples() {
        assert_eq!(sharp_valley(&pv(&[1.0, 4.0])).unwrap().0, 0.0);
        for x in [-2.0, 0.0, 0.3, 5.0] {
            assert_eq!(sharp_valley(&pv(&[x, 1.5])).unwrap().1[1], -2.5);
        }
        let check = finite_difference_check(&SharpValley, &pv(&[0.3, 1.5]), None).unwrap();
        assert!(check.max_rel_error <= 1e-6, "{check:?}");
    }

    #[test]
    fn valley_stationary_points() {
        // d/dx = 8 (x-1) x (5.2 x + 3.4)
        for x in [0.0, 1.0, -3.4 / 5.2] {
            let g = sharp_valley(&pv(&[x, 4.0])).unwrap().1;
            assert!(g[0].abs() < 1e-12, "x={x}: {}", g[0]);
        }
    }

    #[test]
    fn losses_nonnegative() {
        let mut rng = Rng::new(11);
        for _ in 0..200 {
            let p = pv(&[rng.uniform_range(-4.0, 4.0), rng.uniform_range(-4.0, 8.0)]);
            assert!(rosenbrock(&p).unwrap().0 >= 0.0);
            assert!(sharp_valley(&p).unwrap().0 >= 0.0);
        }
    }

    #[test]
    fn wrong_dimension() {
        assert!(rosenbrock(&pv(&[1.0])).is_err());
        assert!(sharp_valley(&pv(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn quadratic_gradient() {
        let q = Quadratic {
            coefficients: vec![1.0, 3.0],
        };
        let (l, g) = q.loss_grad(&pv(&[1.0, -2.0]), None).unwrap();
        assert_eq!(l, 13.0);
        assert_eq!(g.as_slice(), &[2.0, -12.0]);
    }
}
