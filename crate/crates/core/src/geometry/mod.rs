//! Trajectories, segment distances, time resampling and state embeddings.

mod embed;
mod resample;
mod segment;

pub use embed::{embed, EmbedMode, ScalingWeights, StateLayout};
pub use resample::{resample, NaturalCubicSpline};
pub use segment::{segment_distance, segment_distance_raw, Segment};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem parameters a trajectory was solved for.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    #[serde(default)]
    pub start: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Vec<f64>>,
}

/// A discrete trajectory: `T` states, `T - 1` controls sampled every `dt` seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(with = "crate::serde_vecs")]
    pub states: Vec<DVector<f64>>,
    #[serde(with = "crate::serde_vecs")]
    pub controls: Vec<DVector<f64>>,
    pub dt: f64,
    #[serde(default)]
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>, dt: f64) -> Result<Self> {
        let start = states.first().map(|s| s.as_slice().to_vec()).unwrap_or_default();
        let traj = Self {
            states,
            controls,
            dt,
            meta: TrajectoryMeta { start, goal: None },
        };
        traj.validate()?;
        Ok(traj)
    }

    /// Builds a trajectory without controls (zero-width control vectors).
    pub fn from_states(states: Vec<DVector<f64>>, dt: f64) -> Result<Self> {
        let n = states.len().saturating_sub(1);
        Self::new(states, vec![DVector::zeros(0); n], dt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::Empty("trajectory has no states"));
        }
        if self.states.len() != self.controls.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "trajectory has {} states but {} controls",
                self.states.len(),
                self.controls.len()
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        let m = self.state_dim();
        for s in &self.states {
            if s.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: s.len() });
            }
        }
        let c = self.control_dim();
        for u in &self.controls {
            if u.len() != c {
                return Err(Error::DimensionMismatch { expected: c, got: u.len() });
            }
        }
        let finite = self
            .states
            .iter()
            .chain(self.controls.iter())
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::NonFinite("trajectory entries".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn control_dim(&self) -> usize {
        self.controls.first().map_or(0, |u| u.len())
    }

    pub fn duration(&self) -> f64 {
        (self.len() as f64 - 1.0) * self.dt
    }

    /// Linear segments between consecutive states.
    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.states.windows(2).map(|w| Segment::new(w[0].clone(), w[1].clone()))
    }

    /// States flattened row-major followed by controls flattened row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.state_dim() + self.controls.len() * self.control_dim());
        for s in &self.states {
            out.extend_from_slice(s.as_slice());
        }
        for u in &self.controls {
            out.extend_from_slice(u.as_slice());
        }
        out
    }

    /// Inverse of [`Trajectory::flatten`].
    pub fn unflatten(flat: &[f64], horizon: usize, state_dim: usize, control_dim: usize, dt: f64) -> Result<Self> {
        let expected = horizon * state_dim + (horizon - 1) * control_dim;
        if flat.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: flat.len() });
        }
        let (xs, us) = flat.split_at(horizon * state_dim);
        let states = xs.chunks(state_dim).map(DVector::from_column_slice).collect();
        let controls = if control_dim == 0 {
            vec![DVector::zeros(0); horizon - 1]
        } else {
            us.chunks(control_dim).map(DVector::from_column_slice).collect()
        };
        Self::new(states, controls, dt)
    }
}
