//! The two benchmark tasks: cartpole swing-up and quadrotor navigation
//! around cylinders.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::FiltrationSpec;
use crate::dynamics::{Cartpole, CartpoleParams, Dynamics, Model, Quadrotor, QuadrotorParams};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{EmbedMode, ScalingWeights, StateLayout};
use crate::ocp::{Axis, CostModel, Cylinder, OCProblem, ObstacleSet, StateResidual};

/// Axis-aligned box of start states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRange {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StartRange {
    pub fn symmetric(half_widths: &[f64]) -> Self {
        Self {
            lo: half_widths.iter().map(|w| -w).collect(),
            hi: half_widths.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.lo.len(), self.hi.len())?;
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("start range has lo > hi".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| if l == h { l } else { rng.random_range(l..h) })
            .collect()
    }
}

/// How trajectories of a task are embedded for filtration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationSettings {
    pub mode: EmbedMode,
    /// Weights of the embedded coordinates; defaults follow the layout.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub connect_endpoints: bool,
    pub resample: Option<usize>,
    #[serde(default)]
    pub landmark_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartpoleTask {
    pub params: CartpoleParams,
    pub horizon: usize,
    pub starts: StartRange,
    /// Seed controls are drawn uniformly from `[−limit, limit]`.
    pub seed_control_limit: f64,
    /// Running weights on the residual `(x, cos θ, sin θ, ẋ, θ̇)`.
    pub running_weights: Vec<f64>,
    pub control_weight: f64,
    pub terminal_weight: f64,
    pub filtration: FiltrationSettings,
    /// Benchmark success needs a final cost below this.
    pub success_cost: f64,
}

impl Default for CartpoleTask {
    fn default() -> Self {
        Self {
            params: CartpoleParams::default(),
            horizon: 100,
            starts: StartRange::symmetric(&[1.0, PI, 1.0, 0.5 * PI]),
            seed_control_limit: 1.0,
            running_weights: vec![0.0; 5],
            control_weight: 1e-2,
            terminal_weight: 1e3,
            filtration: FiltrationSettings {
                mode: EmbedMode::FullState,
                weights: Some(vec![0.01, 1.0, 1.0, 0.01, 0.01]),
                connect_endpoints: false,
                resample: Some(20),
                landmark_radius: Some(0.05),
            },
            success_cost: 50.0,
        }
    }
}

impl CartpoleTask {
    pub fn model(&self) -> Cartpole {
        Cartpole::new(self.params)
    }

    pub fn problem(&self, x0: &[f64]) -> Result<OCProblem> {
        let cost = CostModel {
            residual: StateResidual::Angle { index: 1 },
            goal: vec![0.0, PI, 0.0, 0.0],
            running_weights: self.running_weights.clone(),
            terminal_weights: vec![self.terminal_weight; 5],
            control_weight: self.control_weight,
            control_ref: vec![0.0],
            obstacles: ObstacleSet::default(),
        };
        OCProblem::new(Model::Cartpole(self.model()), DVector::from_column_slice(x0), self.horizon, cost)
    }

    pub fn layout() -> StateLayout {
        StateLayout {
            position: vec![0],
            orientation: vec![1],
            velocity: vec![2, 3],
            angular: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorTask {
    pub params: QuadrotorParams,
    pub horizon: usize,
    pub starts: StartRange,
    pub goal: [f64; 3],
    pub obstacles: ObstacleSet,
    /// Standard deviation of the Gaussian noise added to hover seeds.
    pub seed_noise_std: f64,
    pub control_weight: f64,
    pub terminal_weight: f64,
    /// Starts closer than this to an obstacle are rejected.
    pub start_clearance: f64,
    pub filtration: FiltrationSettings,
    pub success_cost: f64,
}

impl QuadrotorTask {
    /// One z-axis cylinder of radius 1 at the origin: every straight line
    /// from the start box to the goal passes through it.
    pub fn single_cylinder() -> Self {
        let cylinders = vec![Cylinder::new(Axis::Z, [0.0, 0.0], 1.0).expect("valid cylinder")];
        Self::with_cylinders(cylinders)
    }

    /// Three mutually orthogonal cylinders through the origin.
    pub fn three_cylinders() -> Self {
        let cylinders = [Axis::X, Axis::Y, Axis::Z]
            .into_iter()
            .map(|a| Cylinder::new(a, [0.0, 0.0], 0.75).expect("valid cylinder"))
            .collect();
        Self::with_cylinders(cylinders)
    }

    fn with_cylinders(cylinders: Vec<Cylinder>) -> Self {
        Self {
            params: QuadrotorParams::default(),
            horizon: 50,
            starts: StartRange {
                lo: vec![-3.25; 3],
                hi: vec![-0.25; 3],
            },
            goal: [1.75; 3],
            obstacles: ObstacleSet::new(cylinders, 0.1, 1e3).expect("valid obstacle set"),
            seed_noise_std: 0.1,
            control_weight: 1e-2,
            terminal_weight: 1e3,
            start_clearance: 0.2,
            filtration: FiltrationSettings {
                mode: EmbedMode::PositionOnly,
                weights: None,
                connect_endpoints: true,
                resample: Some(10),
                landmark_radius: Some(0.1),
            },
            success_cost: 50.0,
        }
    }

    pub fn model(&self) -> Quadrotor {
        Quadrotor::new(self.params)
    }

    pub fn problem(&self, start: &[f64]) -> Result<OCProblem> {
        check_dim(3, start.len())?;
        let model = self.model();
        let mut goal = vec![0.0; 12];
        goal[..3].copy_from_slice(&self.goal);
        let cost = CostModel {
            residual: StateResidual::Identity,
            goal,
            running_weights: vec![0.0; 12],
            terminal_weights: vec![self.terminal_weight; 12],
            control_weight: self.control_weight,
            control_ref: vec![model.hover_force(); 4],
            obstacles: self.obstacles.clone(),
        };
        let x0 = Quadrotor::resting_state([start[0], start[1], start[2]]);
        OCProblem::new(Model::Quadrotor(model), x0, self.horizon, cost)
    }

    pub fn layout() -> StateLayout {
        StateLayout {
            position: vec![0, 1, 2],
            orientation: vec![3, 4, 5],
            velocity: (6..12).collect(),
            angular: vec![],
        }
    }

    /// Whether a start position is usable: collision-free with clearance.
    pub fn start_is_valid(&self, p: &[f64]) -> bool {
        let v = nalgebra::Vector3::new(p[0], p[1], p[2]);
        self.obstacles.signed_distance(&v) >= self.start_clearance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    Cartpole(CartpoleTask),
    Quadrotor(QuadrotorTask),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Cartpole(_) => "cartpole",
            Task::Quadrotor(_) => "quadrotor",
        }
    }

    /// Problem parameters of an instance: the start state for the cartpole,
    /// the start position for the quadrotor.
    pub fn problem(&self, params: &[f64]) -> Result<OCProblem> {
        match self {
            Task::Cartpole(t) => t.problem(params),
            Task::Quadrotor(t) => t.problem(params),
        }
    }

    pub fn starts(&self) -> &StartRange {
        match self {
            Task::Cartpole(t) => &t.starts,
            Task::Quadrotor(t) => &t.starts,
        }
    }

    pub fn success_cost(&self) -> f64 {
        match self {
            Task::Cartpole(t) => t.success_cost,
            Task::Quadrotor(t) => t.success_cost,
        }
    }

    pub fn layout(&self) -> StateLayout {
        match self {
            Task::Cartpole(_) => CartpoleTask::layout(),
            Task::Quadrotor(_) => QuadrotorTask::layout(),
        }
    }

    pub fn filtration_settings(&self) -> &FiltrationSettings {
        match self {
            Task::Cartpole(t) => &t.filtration,
            Task::Quadrotor(t) => &t.filtration,
        }
    }

    pub fn filtration_spec(&self) -> Result<FiltrationSpec> {
        let s = self.filtration_settings();
        let layout = self.layout();
        let weights = match &s.weights {
            Some(w) => ScalingWeights::new(w.clone())?,
            None => ScalingWeights::default_for(&layout, s.mode),
        };
        Ok(FiltrationSpec {
            layout,
            mode: s.mode,
            weights,
            connect_endpoints: s.connect_endpoints,
            resample: s.resample,
            landmark_radius: s.landmark_radius,
        })
    }

    /// Initialization without learned information: hover or zero controls,
    /// states held at the initial state.
    pub fn cold_start(&self, p: &OCProblem) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let u = match self {
            Task::Cartpole(_) => DVector::zeros(p.control_dim()),
            Task::Quadrotor(t) => t.model().hover_control(),
        };
        (vec![p.x0.clone(); p.horizon], vec![u; p.horizon - 1])
    }

    /// Whether every knot of `xs` is clear of the obstacles.
    pub fn collision_free(&self, p: &OCProblem, xs: &[DVector<f64>]) -> bool {
        p.min_clearance(xs) >= 0.0
    }

    pub fn validate(&self) -> Result<()> {
        self.starts().validate()?;
        let dim = match self {
            Task::Cartpole(_) => 4,
            Task::Quadrotor(_) => 3,
        };
        check_dim(dim, self.starts().lo.len())?;
        let probe: Vec<f64> = self.starts().lo.clone();
        let p = self.problem(&probe)?;
        let _ = p.model.control_bounds();
        self.filtration_spec().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cylinder_blocks_every_straight_line() {
        let t = QuadrotorTask::single_cylinder();
        let c = &t.obstacles.cylinders[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            let s = t.starts.sample(&mut rng);
            let hit = (0..=1000).any(|i| {
                let a = i as f64 / 1000.0;
                let p = nalgebra::Vector3::new(s[0] + a * (1.75 - s[0]), s[1] + a * (1.75 - s[1]), 0.0);
                c.signed_distance(&p) < 0.0
            });
            assert!(hit, "{s:?}");
        }
    }

    #[test]
    fn cold_start_shapes() {
        let task = Task::Quadrotor(QuadrotorTask::single_cylinder());
        let p = task.problem(&[-2.0, -2.0, -2.0]).unwrap();
        let (xs, us) = task.cold_start(&p);
        assert_eq!(xs.len(), 50);
        assert_eq!(us.len(), 49);
        assert!(xs.iter().all(|x| x == &p.x0));
        assert!(us.iter().all(|u| u.iter().all(|&f| (f - 9.81 / 4.0).abs() < 1e-15)));
        let task = Task::Cartpole(CartpoleTask::default());
        let p = task.problem(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let (xs, us) = task.cold_start(&p);
        assert_eq!(xs.len(), 100);
        assert!(us.iter().all(|u| u[0] == 0.0));
    }

    #[test]
    fn tasks_validate_and_round_trip() {
        for task in [Task::Cartpole(CartpoleTask::default()), Task::Quadrotor(QuadrotorTask::single_cylinder()), Task::Quadrotor(QuadrotorTask::three_cylinders())] {
            task.validate().unwrap();
            let s = toml::to_string(&task).unwrap();
            let back: Task = toml::from_str(&s).unwrap();
            assert_eq!(back, task);
        }
    }

    #[test]
    fn cartpole_embedding_dimension() {
        let spec = Task::Cartpole(CartpoleTask::default()).filtration_spec().unwrap();
        assert_eq!(spec.weights.dim(), 5);
    }
}
