use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{rk4, rk4_with_jacobians, Dynamics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub arm_length: f64,
    pub inertia: [f64; 3],
    /// Yaw torque per unit rotor force.
    pub torque_coefficient: f64,
    pub gravity: f64,
    pub dt: f64,
    pub max_rotor_force: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            arm_length: 0.2,
            inertia: [0.01, 0.01, 0.02],
            torque_coefficient: 0.016,
            gravity: 9.81,
            dt: 0.05,
            max_rotor_force: 5.0,
        }
    }
}

/// Rigid-body quadrotor driven by four rotor forces.
///
/// State: position, ZYX Euler angles `(roll, pitch, yaw)`, world-frame
/// velocity, body angular rates. Rotors 1–4 sit on the `+x, +y, −x, −y` arms;
/// rotors 1 and 3 spin opposite to 2 and 4. No drag.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadrotor {
    pub params: QuadrotorParams,
}

/// Rotation body → world for ZYX Euler angles.
pub fn rotation(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

impl Quadrotor {
    pub fn new(params: QuadrotorParams) -> Self {
        Self { params }
    }

    /// Per-rotor force that balances gravity.
    pub fn hover_force(&self) -> f64 {
        self.params.mass * self.params.gravity / 4.0
    }

    pub fn hover_control(&self) -> DVector<f64> {
        DVector::from_element(4, self.hover_force())
    }

    /// Collective thrust and body torques from rotor forces.
    pub fn wrench(&self, u: &DVector<f64>) -> (f64, Vector3<f64>) {
        let (l, c) = (self.params.arm_length, self.params.torque_coefficient);
        let thrust = u.iter().sum();
        let torque = Vector3::new(l * (u[1] - u[3]), l * (u[2] - u[0]), c * (u[0] - u[1] + u[2] - u[3]));
        (thrust, torque)
    }

    pub fn xdot(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let (roll, pitch, yaw) = (x[3], x[4], x[5]);
        let w = Vector3::new(x[9], x[10], x[11]);
        let (thrust, torque) = self.wrench(u);
        let acc = rotation(roll, pitch, yaw) * Vector3::new(0.0, 0.0, thrust / p.mass) - Vector3::new(0.0, 0.0, p.gravity);
        let (sr, cr) = roll.sin_cos();
        let (tp, cp) = (pitch.tan(), pitch.cos());
        let euler_rates = Vector3::new(
            w[0] + sr * tp * w[1] + cr * tp * w[2],
            cr * w[1] - sr * w[2],
            (sr * w[1] + cr * w[2]) / cp,
        );
        let j = Vector3::from(p.inertia);
        let jw = j.component_mul(&w);
        let wdot = (torque - w.cross(&jw)).component_div(&j);
        let mut d = DVector::zeros(12);
        d.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(6));
        d.fixed_rows_mut::<3>(3).copy_from(&euler_rates);
        d.fixed_rows_mut::<3>(6).copy_from(&acc);
        d.fixed_rows_mut::<3>(9).copy_from(&wdot);
        d
    }

    /// Continuous-time Jacobians `(∂ẋ/∂x, ∂ẋ/∂u)`.
    pub fn xdot_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = &self.params;
        let (sr, cr) = x[3].sin_cos();
        let (sp, cp) = x[4].sin_cos();
        let (sy, cy) = x[5].sin_cos();
        let tp = sp / cp;
        let w = Vector3::new(x[9], x[10], x[11]);
        let thrust: f64 = u.iter().sum();
        let mut a = DMatrix::zeros(12, 12);
        let mut b = DMatrix::zeros(12, 4);
        for i in 0..3 {
            a[(i, 6 + i)] = 1.0;
        }

        let rates = Matrix3::new(1.0, sr * tp, cr * tp, 0.0, cr, -sr, 0.0, sr / cp, cr / cp);
        let d_roll = Matrix3::new(0.0, cr * tp, -sr * tp, 0.0, -sr, -cr, 0.0, cr / cp, -sr / cp) * w;
        let sec2 = 1.0 / (cp * cp);
        let d_pitch = Matrix3::new(0.0, sr * sec2, cr * sec2, 0.0, 0.0, 0.0, 0.0, sr * sp * sec2, cr * sp * sec2) * w;
        a.view_mut((3, 3), (3, 1)).copy_from(&d_roll);
        a.view_mut((3, 4), (3, 1)).copy_from(&d_pitch);
        a.view_mut((3, 9), (3, 3)).copy_from(&rates);

        let z_axis = Vector3::new(cy * sp * cr + sy * sr, sy * sp * cr - cy * sr, cp * cr);
        let dz_roll = Vector3::new(-cy * sp * sr + sy * cr, -sy * sp * sr - cy * cr, -cp * sr);
        let dz_pitch = Vector3::new(cy * cp * cr, sy * cp * cr, -sp * cr);
        let dz_yaw = Vector3::new(-sy * sp * cr + cy * sr, cy * sp * cr + sy * sr, 0.0);
        let k = thrust / p.mass;
        a.view_mut((6, 3), (3, 1)).copy_from(&(dz_roll * k));
        a.view_mut((6, 4), (3, 1)).copy_from(&(dz_pitch * k));
        a.view_mut((6, 5), (3, 1)).copy_from(&(dz_yaw * k));
        for col in 0..4 {
            b.view_mut((6, col), (3, 1)).copy_from(&(z_axis / p.mass));
        }

        let j = Vector3::from(p.inertia);
        let inv_j = Matrix3::from_diagonal(&j.map(|v| 1.0 / v));
        let gyro = w.cross_matrix() * Matrix3::from_diagonal(&j) - j.component_mul(&w).cross_matrix();
        a.view_mut((9, 9), (3, 3)).copy_from(&(-inv_j * gyro));
        let (l, c) = (p.arm_length, p.torque_coefficient);
        let mix = nalgebra::Matrix3x4::new(0.0, l, 0.0, -l, -l, 0.0, l, 0.0, c, -c, c, -c);
        b.view_mut((9, 0), (3, 4)).copy_from(&(inv_j * mix));
        (a, b)
    }

    /// Level, motionless state at `position`.
    pub fn resting_state(position: [f64; 3]) -> DVector<f64> {
        let mut x = DVector::zeros(12);
        x.fixed_rows_mut::<3>(0).copy_from_slice(&position);
        x
    }
}

impl Dynamics for Quadrotor {
    fn state_dim(&self) -> usize {
        12
    }

    fn control_dim(&self) -> usize {
        4
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn control_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        (DVector::zeros(4), DVector::from_element(4, self.params.max_rotor_force))
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        rk4(|x, u| self.xdot(x, u), x, u, self.params.dt)
    }

    fn derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (_, fx, fu) = rk4_with_jacobians(|x, u| self.xdot(x, u), |x, u| self.xdot_jacobians(x, u), x, u, self.params.dt);
        (fx, fu)
    }
}
