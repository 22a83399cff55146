use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two coordinates orthogonal to the axis, in increasing order.
    pub fn plane(self) -> [usize; 2] {
        match self {
            Axis::X => [1, 2],
            Axis::Y => [0, 2],
            Axis::Z => [0, 1],
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(Error::InvalidArgument(format!("unknown axis `{s}`"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(["x", "y", "z"][self.index()])
    }
}

/// Infinite cylinder along a coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub axis: Axis,
    /// Offset of the axis in the plane coordinates given by [`Axis::plane`].
    pub center: [f64; 2],
    pub radius: f64,
}

impl Cylinder {
    pub fn new(axis: Axis, center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid cylinder radius {radius} or center {center:?}")));
        }
        Ok(Self { axis, center, radius })
    }

    fn planar_offset(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let [a, b] = self.axis.plane();
        let mut d = Vector3::zeros();
        d[a] = p[a] - self.center[0];
        d[b] = p[b] - self.center[1];
        d
    }

    /// Distance to the surface; negative inside.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.planar_offset(p).norm() - self.radius
    }
}

/// Cylinders plus the clearance penalty applied to positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    pub cylinders: Vec<Cylinder>,
    pub margin: f64,
    pub weight: f64,
}

impl Default for ObstacleSet {
    fn default() -> Self {
        Self {
            cylinders: Vec::new(),
            margin: 0.1,
            weight: 1e3,
        }
    }
}

impl ObstacleSet {
    pub fn new(cylinders: Vec<Cylinder>, margin: f64, weight: f64) -> Result<Self> {
        if !(margin >= 0.0) || !(weight >= 0.0) {
            return Err(Error::InvalidArgument("obstacle margin and weight must be nonnegative".into()));
        }
        Ok(Self {
            cylinders,
            margin,
            weight,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.cylinders.is_empty()
    }

    /// Smallest signed distance to any cylinder (`+∞` with none).
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.cylinders
            .iter()
            .map(|c| c.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn collision_free(&self, p: &Vector3<f64>) -> bool {
        self.signed_distance(p) >= 0.0
    }

    /// Penalty `w·max(0, margin − d)²` summed over cylinders, with its
    /// gradient and Hessian in position.
    pub fn penalty(&self, p: &Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
        self.evaluate(p, true)
    }

    /// As [`penalty`](Self::penalty), but with the Gauss–Newton Hessian
    /// `2w ∇h ∇hᵀ`, which is positive semidefinite.
    pub fn penalty_gauss_newton(&self, p: &Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
        self.evaluate(p, false)
    }

    fn evaluate(&self, p: &Vector3<f64>, curvature: bool) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let mut value = 0.0;
        let mut grad = Vector3::zeros();
        let mut hess = Matrix3::zeros();
        for c in &self.cylinders {
            let d = c.planar_offset(p);
            let rho = d.norm();
            let h = self.margin - (rho - c.radius);
            if h <= 0.0 {
                continue;
            }
            value += self.weight * h * h;
            if rho < 1e-12 {
                continue;
            }
            let n = d / rho;
            grad -= n * (2.0 * self.weight * h);
            hess += n * n.transpose() * (2.0 * self.weight);
            if curvature {
                let mut proj = -n * n.transpose();
                for i in c.axis.plane() {
                    proj[(i, i)] += 1.0;
                }
                hess -= proj * (2.0 * self.weight * h / rho);
            }
        }
        (value, grad, hess)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> ObstacleSet {
        ObstacleSet::new(vec![Cylinder::new(Axis::Z, [0.0, 0.0], 1.0).unwrap(), Cylinder::new(Axis::X, [0.5, -0.2], 0.6).unwrap()], 0.1, 50.0).unwrap()
    }

    #[test]
    fn far_point_has_no_penalty() {
        let (v, g, h) = set().penalty(&Vector3::new(5.0, 5.0, 5.0));
        assert_eq!(v, 0.0);
        assert_eq!(g, Vector3::zeros());
        assert_eq!(h, Matrix3::zeros());
    }

    #[test]
    fn inside_gradient_points_toward_axis() {
        let s = ObstacleSet::new(vec![Cylinder::new(Axis::Z, [1.0, 0.0], 1.0).unwrap()], 0.1, 10.0).unwrap();
        let p = Vector3::new(1.5, 0.2, 3.0);
        let (v, g, _) = s.penalty(&p);
        assert!(v > 0.0);
        let outward = Vector3::new(0.5, 0.2, 0.0);
        assert!(g.dot(&outward) < 0.0);
        assert_eq!(g.z, 0.0);
    }

    #[test]
    fn continuous_at_margin() {
        let s = ObstacleSet::new(vec![Cylinder::new(Axis::Y, [0.0, 0.0], 1.0).unwrap()], 0.1, 10.0).unwrap();
        let just_in = s.penalty(&Vector3::new(1.1 - 1e-9, 0.0, 0.0)).0;
        let just_out = s.penalty(&Vector3::new(1.1 + 1e-9, 0.0, 0.0)).0;
        assert!(just_in > 0.0 && just_in < 1e-15);
        assert_eq!(just_out, 0.0);
        assert!(s.penalty(&Vector3::new(0.5, 7.0, 0.0)).0 > 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let s = set();
        let h = 1e-6;
        for p in [Vector3::new(0.7, 0.5, 0.1), Vector3::new(0.3, -0.4, -0.1), Vector3::new(1.05, 0.0, 2.0)] {
            let (_, g, hess) = s.penalty(&p);
            for i in 0..3 {
                let mut e = Vector3::zeros();
                e[i] = h;
                let (vp, gp, _) = s.penalty(&(p + e));
                let (vm, gm, _) = s.penalty(&(p - e));
                assert!(((vp - vm) / (2.0 * h) - g[i]).abs() < 1e-5 * g[i].abs().max(1.0));
                let col = (gp - gm) / (2.0 * h);
                for j in 0..3 {
                    assert!((col[j] - hess[(j, i)]).abs() < 1e-5 * hess[(j, i)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn gauss_newton_hessian_is_psd_and_drops_only_curvature() {
        let s = ObstacleSet::new(vec![Cylinder::new(Axis::Z, [0.0, 0.0], 1.0).unwrap()], 0.1, 50.0).unwrap();
        for p in [Vector3::new(0.05, 0.02, 0.0), Vector3::new(0.7, 0.5, 0.1), Vector3::new(-0.3, 0.9, 2.0)] {
            let (v, g, exact) = s.penalty(&p);
            let (vg, gg, gn) = s.penalty_gauss_newton(&p);
            assert_eq!((v, g), (vg, gg));
            assert!(gn.symmetric_eigen().eigenvalues.iter().all(|&e| e >= -1e-9));
            let n = Vector3::new(p.x, p.y, 0.0).normalize();
            assert!(((exact - gn) * n).norm() < 1e-9);
        }
        let (_, _, near_axis) = s.penalty(&Vector3::new(0.05, 0.02, 0.0));
        assert!(near_axis.symmetric_eigen().eigenvalues.min() < 0.0);
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(Cylinder::new(Axis::Z, [0.0, 0.0], 0.0).is_err());
        assert!("w".parse::<Axis>().is_err());
    }
}
