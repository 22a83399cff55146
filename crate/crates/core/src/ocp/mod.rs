//! Optimal-control problem definitions: dynamics, horizon, costs, obstacles.

mod obstacles;

pub use obstacles::{Axis, Cylinder, ObstacleSet};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Dynamics, Model};
use crate::error::{check_dim, Error, Result};

/// Map from state to the vector the goal cost penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateResidual {
    /// `x − x_goal`.
    Identity,
    /// Like `Identity`, but the angle at `index` is replaced by the pair
    /// `(cos θ − cos θ_goal, sin θ − sin θ_goal)`, so every full turn of the
    /// goal angle is equally good.
    Angle { index: usize },
}

impl StateResidual {
    pub fn dim(&self, state_dim: usize) -> usize {
        match self {
            StateResidual::Identity => state_dim,
            StateResidual::Angle { .. } => state_dim + 1,
        }
    }

    /// Residual, its Jacobian, and the per-component Hessian diagonal entry
    /// for the angle components (`(row, ∂²r_row/∂θ²)` pairs).
    fn eval(&self, x: &DVector<f64>, goal: &[f64]) -> (DVector<f64>, DMatrix<f64>, Vec<(usize, f64)>) {
        let n = x.len();
        match *self {
            StateResidual::Identity => {
                let r = DVector::from_iterator(n, x.iter().zip(goal).map(|(a, b)| a - b));
                (r, DMatrix::identity(n, n), Vec::new())
            }
            StateResidual::Angle { index } => {
                let mut r = DVector::zeros(n + 1);
                let mut j = DMatrix::zeros(n + 1, n);
                let mut row = 0;
                let (s, c) = x[index].sin_cos();
                let (sg, cg) = goal[index].sin_cos();
                for i in 0..n {
                    if i == index {
                        r[row] = c - cg;
                        r[row + 1] = s - sg;
                        j[(row, i)] = -s;
                        j[(row + 1, i)] = c;
                        row += 2;
                    } else {
                        r[row] = x[i] - goal[i];
                        j[(row, i)] = 1.0;
                        row += 1;
                    }
                }
                let first = index;
                (r, j, vec![(first, -c), (first + 1, -s)])
            }
        }
    }
}

/// Weighted goal residuals, control effort around a reference, and obstacle
/// penalties on the first three state coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub residual: StateResidual,
    pub goal: Vec<f64>,
    /// Per-residual weights of the running cost.
    pub running_weights: Vec<f64>,
    /// Per-residual weights of the terminal cost.
    pub terminal_weights: Vec<f64>,
    pub control_weight: f64,
    pub control_ref: Vec<f64>,
    #[serde(default)]
    pub obstacles: ObstacleSet,
}

/// Derivatives of a stage cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostDerivatives {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    pub lux: DMatrix<f64>,
}

impl CostModel {
    pub fn validate(&self, state_dim: usize, control_dim: usize) -> Result<()> {
        let rdim = self.residual.dim(state_dim);
        check_dim(state_dim, self.goal.len())?;
        check_dim(rdim, self.running_weights.len())?;
        check_dim(rdim, self.terminal_weights.len())?;
        check_dim(control_dim, self.control_ref.len())?;
        if let StateResidual::Angle { index } = self.residual {
            if index >= state_dim {
                return Err(Error::InvalidArgument(format!("angle index {index} out of range")));
            }
        }
        if !self.obstacles.is_empty() && state_dim < 3 {
            return Err(Error::InvalidArgument("obstacles need a 3-D position".into()));
        }
        let weights = self.running_weights.iter().chain(&self.terminal_weights).chain([&self.control_weight]);
        if weights.copied().any(|w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("cost weights must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn position(x: &DVector<f64>) -> Vector3<f64> {
        Vector3::new(x[0], x[1], x[2])
    }

    fn state_part(&self, x: &DVector<f64>, weights: &[f64], order: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (r, j, curv) = self.residual.eval(x, &self.goal);
        let value = r.iter().zip(weights).map(|(ri, w)| w * ri * ri).sum::<f64>();
        if order == 0 {
            return (value, DVector::zeros(0), DMatrix::zeros(0, 0));
        }
        let wr = DVector::from_iterator(r.len(), r.iter().zip(weights).map(|(ri, w)| 2.0 * w * ri));
        let grad = j.transpose() * &wr;
        let wj = DMatrix::from_fn(j.nrows(), j.ncols(), |a, b| 2.0 * weights[a] * j[(a, b)]);
        let mut hess = j.transpose() * wj;
        if let StateResidual::Angle { index } = self.residual {
            for (row, d2) in curv {
                hess[(index, index)] += wr[row] * d2;
            }
        }
        (value, grad, hess)
    }

    fn obstacle_part(&self, x: &DVector<f64>, lx: &mut DVector<f64>, lxx: &mut DMatrix<f64>, exact: bool) -> f64 {
        if self.obstacles.is_empty() {
            return 0.0;
        }
        let p = Self::position(x);
        let (v, g, h) = if exact { self.obstacles.penalty(&p) } else { self.obstacles.penalty_gauss_newton(&p) };
        for a in 0..3 {
            lx[a] += g[a];
            for b in 0..3 {
                lxx[(a, b)] += h[(a, b)];
            }
        }
        v
    }

    pub fn running(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let (value, _, _) = self.state_part(x, &self.running_weights, 0);
        let effort: f64 = u.iter().zip(&self.control_ref).map(|(a, b)| (a - b) * (a - b)).sum();
        let obstacle = if self.obstacles.is_empty() {
            0.0
        } else {
            self.obstacles.penalty(&Self::position(x)).0
        };
        value + self.control_weight * effort + obstacle
    }

    pub fn terminal(&self, x: &DVector<f64>) -> f64 {
        let (value, _, _) = self.state_part(x, &self.terminal_weights, 0);
        let obstacle = if self.obstacles.is_empty() {
            0.0
        } else {
            self.obstacles.penalty(&Self::position(x)).0
        };
        value + obstacle
    }

    /// Exact first and second derivatives; `u` is ignored when `terminal`.
    pub fn derivatives(&self, x: &DVector<f64>, u: &DVector<f64>, terminal: bool) -> CostDerivatives {
        self.derivatives_with(x, u, terminal, true)
    }

    /// Exact gradients; the obstacle penalty contributes its Gauss–Newton
    /// Hessian, so `lxx` never gains negative curvature from obstacles.
    pub fn gauss_newton_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>, terminal: bool) -> CostDerivatives {
        self.derivatives_with(x, u, terminal, false)
    }

    fn derivatives_with(&self, x: &DVector<f64>, u: &DVector<f64>, terminal: bool, exact: bool) -> CostDerivatives {
        let weights = if terminal { &self.terminal_weights } else { &self.running_weights };
        let (_, mut lx, mut lxx) = self.state_part(x, weights, 2);
        self.obstacle_part(x, &mut lx, &mut lxx, exact);
        let c = if terminal { 0 } else { u.len() };
        let (lu, luu) = if terminal {
            (DVector::zeros(0), DMatrix::zeros(0, 0))
        } else {
            let lu = DVector::from_iterator(c, u.iter().zip(&self.control_ref).map(|(a, b)| 2.0 * self.control_weight * (a - b)));
            (lu, DMatrix::identity(c, c) * (2.0 * self.control_weight))
        };
        CostDerivatives {
            lx,
            lu,
            lxx,
            luu,
            lux: DMatrix::zeros(c, x.len()),
        }
    }
}

/// A fully specified finite-horizon problem; `horizon` counts states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OCProblem {
    pub model: Model,
    #[serde(with = "crate::serde_vecs::vector")]
    pub x0: DVector<f64>,
    pub horizon: usize,
    pub cost: CostModel,
}

impl OCProblem {
    pub fn new(model: Model, x0: DVector<f64>, horizon: usize, cost: CostModel) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidArgument(format!("horizon must be at least 2, got {horizon}")));
        }
        check_dim(model.state_dim(), x0.len())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state".into()));
        }
        cost.validate(model.state_dim(), model.control_dim())?;
        Ok(Self {
            model,
            x0,
            horizon,
            cost,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.model.control_dim()
    }

    pub fn with_x0(&self, x0: DVector<f64>) -> Result<Self> {
        Self::new(self.model.clone(), x0, self.horizon, self.cost.clone())
    }

    pub fn check_trajectory(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> Result<()> {
        check_dim(self.horizon, xs.len())?;
        check_dim(self.horizon - 1, us.len())?;
        for x in xs {
            check_dim(self.state_dim(), x.len())?;
        }
        for u in us {
            check_dim(self.control_dim(), u.len())?;
        }
        Ok(())
    }

    /// Running costs over the first `T − 1` knots plus the terminal cost.
    pub fn cost(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> Result<f64> {
        self.check_trajectory(xs, us)?;
        Ok(self.cost_unchecked(xs, us))
    }

    pub(crate) fn cost_unchecked(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
        let running: f64 = xs.iter().zip(us).map(|(x, u)| self.cost.running(x, u)).sum();
        running + self.cost.terminal(xs.last().expect("horizon ≥ 2"))
    }

    pub fn cost_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>, terminal: bool) -> CostDerivatives {
        self.cost.derivatives(x, u, terminal)
    }

    /// Smallest knot clearance from the obstacles (`+∞` without obstacles).
    pub fn min_clearance(&self, xs: &[DVector<f64>]) -> f64 {
        if self.cost.obstacles.is_empty() {
            return f64::INFINITY;
        }
        xs.iter()
            .map(|x| self.cost.obstacles.signed_distance(&CostModel::position(x)))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Cartpole, LinearSystem, Quadrotor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cartpole_cost() -> CostModel {
        CostModel {
            residual: StateResidual::Angle { index: 1 },
            goal: vec![0.0, PI, 0.0, 0.0],
            running_weights: vec![0.5, 0.2, 0.3, 0.1, 0.1],
            terminal_weights: vec![1e3; 5],
            control_weight: 1e-2,
            control_ref: vec![0.0],
            obstacles: ObstacleSet::default(),
        }
    }

    fn quad_cost() -> CostModel {
        let q = Quadrotor::default();
        let mut goal = vec![0.0; 12];
        goal[..3].copy_from_slice(&[1.75, 1.75, 1.75]);
        CostModel {
            residual: StateResidual::Identity,
            goal,
            running_weights: vec![0.1; 12],
            terminal_weights: vec![1e3; 12],
            control_weight: 1e-2,
            control_ref: vec![q.hover_force(); 4],
            obstacles: ObstacleSet::new(vec![Cylinder::new(Axis::Z, [0.0, 0.0], 1.0).unwrap()], 0.1, 100.0).unwrap(),
        }
    }

    fn cartpole_problem() -> OCProblem {
        OCProblem::new(Model::Cartpole(Cartpole::default()), DVector::zeros(4), 6, cartpole_cost()).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_cost() {
        let mut cost = cartpole_cost();
        cost.running_weights = vec![0.0; 5];
        cost.terminal_weights = vec![0.0; 5];
        cost.control_weight = 0.0;
        let p = OCProblem::new(Model::Cartpole(Cartpole::default()), DVector::zeros(4), 4, cost).unwrap();
        let xs = vec![DVector::from_element(4, 1.0); 4];
        let us = vec![DVector::from_element(1, 3.0); 3];
        assert_eq!(p.cost(&xs, &us).unwrap(), 0.0);
    }

    #[test]
    fn terminal_at_goal_is_zero() {
        let mut cost = cartpole_cost();
        cost.running_weights = vec![0.0; 5];
        cost.control_weight = 0.0;
        let p = OCProblem::new(Model::Cartpole(Cartpole::default()), DVector::zeros(4), 3, cost).unwrap();
        let us = vec![DVector::zeros(1); 2];
        for theta in [PI, -PI, 3.0 * PI] {
            let xs = vec![DVector::zeros(4), DVector::zeros(4), DVector::from_vec(vec![0.0, theta, 0.0, 0.0])];
            assert!(p.cost(&xs, &us).unwrap() < 1e-25);
        }
    }

    #[test]
    fn cost_matches_resummation() {
        let p = cartpole_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<DVector<f64>> = (0..6).map(|_| DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0))).collect();
        let us: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_fn(1, |_, _| rng.random_range(-10.0..10.0))).collect();
        let term = |x: &DVector<f64>, w: &[f64]| {
            let r = [x[0], x[1].cos() + 1.0, x[1].sin(), x[2], x[3]];
            r.iter().zip(w).map(|(a, b)| b * a * a).sum::<f64>()
        };
        let mut oracle = 0.0;
        for t in 0..5 {
            oracle += term(&xs[t], &p.cost.running_weights) + 1e-2 * us[t][0] * us[t][0];
        }
        oracle += term(&xs[5], &p.cost.terminal_weights);
        let got = p.cost(&xs, &us).unwrap();
        assert!((got - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
        assert!(p.cost(&xs[..5], &us).is_err());
    }

    #[test]
    fn full_turn_invariance() {
        let p = cartpole_problem();
        let x = DVector::from_vec(vec![0.3, 2.9, -0.1, 0.4]);
        let mut y = x.clone();
        y[1] += 2.0 * PI;
        assert!((p.cost.terminal(&x) - p.cost.terminal(&y)).abs() < 1e-9);
    }

    #[test]
    fn quadratic_derivatives() {
        let model = Model::Linear(LinearSystem::double_integrator(1, 0.1));
        let cost = CostModel {
            residual: StateResidual::Identity,
            goal: vec![0.0, 0.0],
            running_weights: vec![2.0, 3.0],
            terminal_weights: vec![2.0, 3.0],
            control_weight: 0.5,
            control_ref: vec![0.0],
            obstacles: ObstacleSet::default(),
        };
        let p = OCProblem::new(model, DVector::zeros(2), 3, cost).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let d = p.cost_derivatives(&x, &DVector::from_vec(vec![4.0]), false);
        assert_eq!(d.lx, DVector::from_vec(vec![4.0, -12.0]));
        assert_eq!(d.lxx, DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 6.0])));
        assert_eq!(d.lu, DVector::from_vec(vec![4.0]));
    }

    fn check_fd(cost: &CostModel, x: &DVector<f64>, u: &DVector<f64>, terminal: bool) {
        let h = 1e-6;
        let f = |x: &DVector<f64>, u: &DVector<f64>| if terminal { cost.terminal(x) } else { cost.running(x, u) };
        let d = cost.derivatives(x, u, terminal);
        let tol = |a: f64, b: f64| (a - b).abs() <= 1e-5 * b.abs().max(1.0);
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            assert!(tol(d.lx[i], (f(&xp, u) - f(&xm, u)) / (2.0 * h)), "lx[{i}]");
            let col = (cost.derivatives(&xp, u, terminal).lx - cost.derivatives(&xm, u, terminal).lx) / (2.0 * h);
            for j in 0..x.len() {
                assert!(tol(d.lxx[(j, i)], col[j]), "lxx[{j},{i}]");
            }
        }
        if !terminal {
            for i in 0..u.len() {
                let (mut up, mut um) = (u.clone(), u.clone());
                up[i] += h;
                um[i] -= h;
                assert!(tol(d.lu[i], (f(x, &up) - f(x, &um)) / (2.0 * h)));
                let col = (cost.derivatives(x, &up, false).lu - cost.derivatives(x, &um, false).lu) / (2.0 * h);
                for j in 0..u.len() {
                    assert!(tol(d.luu[(j, i)], col[j]));
                }
                let cross = (cost.derivatives(x, &up, false).lx - cost.derivatives(x, &um, false).lx) / (2.0 * h);
                for j in 0..x.len() {
                    assert!(tol(d.lux[(i, j)], cross[j]));
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (cp, qc) = (cartpole_cost(), quad_cost());
        for _ in 0..100 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let u = DVector::from_fn(1, |_, _| rng.random_range(-10.0..10.0));
            check_fd(&cp, &x, &u, false);
            check_fd(&cp, &x, &u, true);
            let mut x = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
            x[0] = rng.random_range(-1.5..1.5);
            x[1] = rng.random_range(-1.5..1.5);
            let u = DVector::from_fn(4, |_, _| rng.random_range(0.0..5.0));
            check_fd(&qc, &x, &u, false);
            check_fd(&qc, &x, &u, true);
        }
    }

    #[test]
    fn validation() {
        let mut cost = cartpole_cost();
        cost.terminal_weights.pop();
        assert!(OCProblem::new(Model::Cartpole(Cartpole::default()), DVector::zeros(4), 5, cost).is_err());
        assert!(OCProblem::new(Model::Cartpole(Cartpole::default()), DVector::zeros(4), 1, cartpole_cost()).is_err());
        assert!(OCProblem::new(Model::Cartpole(Cartpole::default()), DVector::zeros(3), 5, cartpole_cost()).is_err());
    }

    #[test]
    fn problem_round_trips_through_json() {
        let p = cartpole_problem();
        let s = serde_json::to_string(&p).unwrap();
        let back: OCProblem = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
