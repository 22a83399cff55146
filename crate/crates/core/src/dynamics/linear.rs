use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Dynamics;
use crate::error::{Error, Result};

/// Forward-Euler discretization of `ẋ = Ax + Bu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dt: f64,
    pub u_lo: DVector<f64>,
    pub u_hi: DVector<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, dt: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let c = b.ncols();
        Ok(Self {
            a,
            b,
            dt,
            u_lo: DVector::from_element(c, f64::NEG_INFINITY),
            u_hi: DVector::from_element(c, f64::INFINITY),
        })
    }

    pub fn with_bounds(mut self, lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != self.b.ncols() || hi.len() != self.b.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.b.ncols(),
                got: lo.len(),
            });
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidArgument("lower control bound above upper".into()));
        }
        self.u_lo = lo;
        self.u_hi = hi;
        Ok(self)
    }

    /// Point mass in `dim` dimensions with force input.
    pub fn double_integrator(dim: usize, dt: f64) -> Self {
        let mut a = DMatrix::zeros(2 * dim, 2 * dim);
        let mut b = DMatrix::zeros(2 * dim, dim);
        for i in 0..dim {
            a[(i, dim + i)] = 1.0;
            b[(dim + i, i)] = 1.0;
        }
        Self::new(a, b, dt).expect("valid shapes")
    }

    /// Discrete transition matrices `(I + A·dt, B·dt)`.
    pub fn discrete(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.a.nrows();
        (DMatrix::identity(n, n) + &self.a * self.dt, &self.b * self.dt)
    }
}

impl Dynamics for LinearSystem {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn control_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        (self.u_lo.clone(), self.u_hi.clone())
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        x + (&self.a * x + &self.b * u) * self.dt
    }

    fn derivatives(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        self.discrete()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_is_euler_form() {
        let sys = LinearSystem::double_integrator(1, 0.1);
        let (fx, fu) = sys.derivatives(&DVector::zeros(2), &DVector::zeros(1));
        assert_eq!(fx, DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]));
        assert_eq!(fu, DMatrix::from_row_slice(2, 1, &[0.0, 0.1]));
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let u = DVector::from_vec(vec![3.0]);
        assert_eq!(sys.step(&x, &u), &fx * &x + &fu * &u);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(LinearSystem::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1), 0.1).is_err());
        assert!(LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1), 0.1).is_err());
        assert!(LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), 0.0).is_err());
        let sys = LinearSystem::double_integrator(1, 0.1);
        assert!(sys.with_bounds(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])).is_err());
    }
}
