//! Discrete-time dynamics models with Jacobians for the solver.

mod cartpole;
mod linear;
mod quadrotor;

pub use cartpole::{Cartpole, CartpoleParams};
pub use linear::LinearSystem;
pub use quadrotor::{Quadrotor, QuadrotorParams};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Step used by the central finite-difference Jacobians.
pub const FD_STEP: f64 = 1e-6;

pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn dt(&self) -> f64;
    /// Lower and upper control bounds; entries may be infinite.
    fn control_bounds(&self) -> (DVector<f64>, DVector<f64>);
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Jacobians `(f_x, f_u)` of [`Dynamics::step`].
    fn derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        fd_jacobians(|x, u| self.step(x, u), x, u, FD_STEP)
    }
}

/// Central finite-difference Jacobians of `f` with respect to both arguments.
pub fn fd_jacobians(
    f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = f(x, u).len();
    let mut fx = DMatrix::zeros(m, x.len());
    let mut fu = DMatrix::zeros(m, u.len());
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        fx.set_column(i, &((f(&xp, u) - f(&xm, u)) / (2.0 * h)));
    }
    for i in 0..u.len() {
        let (mut up, mut um) = (u.clone(), u.clone());
        up[i] += h;
        um[i] -= h;
        fu.set_column(i, &((f(x, &up) - f(x, &um)) / (2.0 * h)));
    }
    (fx, fu)
}

/// One classical Runge–Kutta step of `ẋ = f(x, u)` with zero-order-hold `u`.
pub fn rk4(f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(x, u);
    let k2 = f(&(x + &k1 * (0.5 * h)), u);
    let k3 = f(&(x + &k2 * (0.5 * h)), u);
    let k4 = f(&(x + &k3 * h), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// RK4 step together with its exact Jacobians, given the continuous-time
/// Jacobian `jac(x, u) -> (A, B)`.
pub fn rk4_with_jacobians(
    f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    jac: impl Fn(&DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>),
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = x.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let k1 = f(x, u);
    let (a1, b1) = jac(x, u);
    let x2 = x + &k1 * (0.5 * h);
    let k2 = f(&x2, u);
    let (a2, b2) = jac(&x2, u);
    let dk1x = a1;
    let dk1u = b1;
    let dk2x = &a2 * (&eye + &dk1x * (0.5 * h));
    let dk2u = &a2 * &dk1u * (0.5 * h) + b2;
    let x3 = x + &k2 * (0.5 * h);
    let k3 = f(&x3, u);
    let (a3, b3) = jac(&x3, u);
    let dk3x = &a3 * (&eye + &dk2x * (0.5 * h));
    let dk3u = &a3 * &dk2u * (0.5 * h) + b3;
    let x4 = x + &k3 * h;
    let k4 = f(&x4, u);
    let (a4, b4) = jac(&x4, u);
    let dk4x = &a4 * (&eye + &dk3x * h);
    let dk4u = &a4 * &dk3u * h + b4;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let fx = eye + (dk1x + dk2x * 2.0 + dk3x * 2.0 + dk4x) * (h / 6.0);
    let fu = (dk1u + dk2u * 2.0 + dk3u * 2.0 + dk4u) * (h / 6.0);
    (next, fx, fu)
}

/// Every model the tasks use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Cartpole(Cartpole),
    Quadrotor(Quadrotor),
    Linear(LinearSystem),
}

impl Model {
    fn inner(&self) -> &dyn Dynamics {
        match self {
            Model::Cartpole(m) => m,
            Model::Quadrotor(m) => m,
            Model::Linear(m) => m,
        }
    }
}

impl Dynamics for Model {
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }

    fn control_dim(&self) -> usize {
        self.inner().control_dim()
    }

    fn dt(&self) -> f64 {
        self.inner().dt()
    }

    fn control_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        self.inner().control_bounds()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.inner().step(x, u)
    }

    fn derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        self.inner().derivatives(x, u)
    }
}

/// Rolls `u` forward from `x0`, returning all `u.len() + 1` states.
pub fn rollout(model: &dyn Dynamics, x0: &DVector<f64>, u: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut xs = Vec::with_capacity(u.len() + 1);
    xs.push(x0.clone());
    for ut in u {
        let next = model.step(xs.last().expect("nonempty"), ut);
        xs.push(next);
    }
    xs
}

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::DMatrix;

    /// Largest entrywise error relative to `max(1, |reference|)`.
    pub fn max_rel_err(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
        a.iter()
            .zip(reference.iter())
            .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1], -x[0].sin() + u[0] * x[0].cos()])
    }

    fn pendulum_jac(x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -x[0].cos() - u[0] * x[0].sin(), 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, x[0].cos()]);
        (a, b)
    }

    #[test]
    fn rk4_jacobians_match_finite_differences() {
        let x = DVector::from_vec(vec![0.7, -0.3]);
        let u = DVector::from_vec(vec![0.4]);
        let (next, fx, fu) = rk4_with_jacobians(pendulum, pendulum_jac, &x, &u, 0.05);
        assert_eq!(next, rk4(pendulum, &x, &u, 0.05));
        let (fx_fd, fu_fd) = fd_jacobians(|x, u| rk4(pendulum, x, u, 0.05), &x, &u, 1e-6);
        assert!(testutil::max_rel_err(&fx, &fx_fd) < 1e-8);
        assert!(testutil::max_rel_err(&fu, &fu_fd) < 1e-8);
    }

    #[test]
    fn rk4_is_exact_for_quartic_growth() {
        let f = |x: &DVector<f64>, _: &DVector<f64>| DVector::from_vec(vec![1.0, x[0], x[1], x[2]]);
        let x = DVector::zeros(4);
        let next = rk4(f, &x, &DVector::zeros(0), 0.5);
        assert!((next[2] - 0.5f64.powi(3) / 6.0).abs() < 1e-15);
        assert!((next[3] - 0.5f64.powi(4) / 24.0).abs() < 1e-15);
    }
}
