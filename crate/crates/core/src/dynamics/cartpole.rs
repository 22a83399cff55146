use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{rk4, rk4_with_jacobians, Dynamics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub force_limit: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.5,
            pole_length: 0.5,
            gravity: 9.81,
            dt: 0.02,
            force_limit: 10.0,
        }
    }
}

/// Cart with a free pole; state `(x, θ, ẋ, θ̇)` with `θ = 0` hanging down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cartpole {
    pub params: CartpoleParams,
}

impl Cartpole {
    pub fn new(params: CartpoleParams) -> Self {
        Self { params }
    }

    /// Continuous-time state derivative.
    pub fn xdot(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let CartpoleParams {
            cart_mass: mc,
            pole_mass: mp,
            pole_length: l,
            gravity: g,
            ..
        } = self.params;
        let (s, c) = x[1].sin_cos();
        let w = x[3];
        let d = mc + mp * s * s;
        let xdd = (u[0] + mp * s * (l * w * w + g * c)) / d;
        let tdd = (-u[0] * c - mp * l * w * w * c * s - (mc + mp) * g * s) / (l * d);
        DVector::from_vec(vec![x[2], w, xdd, tdd])
    }

    /// Continuous-time Jacobians `(∂ẋ/∂x, ∂ẋ/∂u)`.
    pub fn xdot_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let CartpoleParams {
            cart_mass: mc,
            pole_mass: mp,
            pole_length: l,
            gravity: g,
            ..
        } = self.params;
        let (s, c) = x[1].sin_cos();
        let w = x[3];
        let d = mc + mp * s * s;
        let dd = 2.0 * mp * s * c;
        let n1 = u[0] + mp * s * (l * w * w + g * c);
        let dn1 = mp * (c * l * w * w + g * (c * c - s * s));
        let n2 = -u[0] * c - mp * l * w * w * c * s - (mc + mp) * g * s;
        let dn2 = u[0] * s - mp * l * w * w * (c * c - s * s) - (mc + mp) * g * c;

        let mut a = DMatrix::zeros(4, 4);
        a[(0, 2)] = 1.0;
        a[(1, 3)] = 1.0;
        a[(2, 1)] = (dn1 * d - n1 * dd) / (d * d);
        a[(2, 3)] = 2.0 * mp * s * l * w / d;
        a[(3, 1)] = (dn2 * d - n2 * dd) / (l * d * d);
        a[(3, 3)] = -2.0 * mp * w * c * s / d;
        let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 1.0 / d, -c / (l * d)]);
        (a, b)
    }

    /// Total mechanical energy, zero potential at the hinge height.
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        let CartpoleParams {
            cart_mass: mc,
            pole_mass: mp,
            pole_length: l,
            gravity: g,
            ..
        } = self.params;
        let (v, w, c) = (x[2], x[3], x[1].cos());
        0.5 * (mc + mp) * v * v + mp * l * v * w * c + 0.5 * mp * l * l * w * w - mp * g * l * c
    }
}

impl Dynamics for Cartpole {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn control_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let f = self.params.force_limit;
        (DVector::from_element(1, -f), DVector::from_element(1, f))
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        rk4(|x, u| self.xdot(x, u), x, u, self.params.dt)
    }

    fn derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (_, fx, fu) = rk4_with_jacobians(
            |x, u| self.xdot(x, u),
            |x, u| self.xdot_jacobians(x, u),
            x,
            u,
            self.params.dt,
        );
        (fx, fu)
    }
}
