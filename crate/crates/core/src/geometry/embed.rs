use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};

/// Which sub-space of the state the filtration runs in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    FullState,
    PositionOnly,
    PoseOnly,
}

impl FromStr for EmbedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_state" | "full" => Ok(Self::FullState),
            "position_only" | "position" => Ok(Self::PositionOnly),
            "pose_only" | "pose" => Ok(Self::PoseOnly),
            other => Err(Error::InvalidArgument(format!("unknown embedding mode `{other}`"))),
        }
    }
}

impl fmt::Display for EmbedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FullState => "full_state",
            Self::PositionOnly => "position_only",
            Self::PoseOnly => "pose_only",
        })
    }
}

/// Roles of the raw state coordinates.
///
/// Indices listed in `angular` are mapped onto SO(2) as `(cos, sin)` pairs
/// wherever they appear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateLayout {
    pub position: Vec<usize>,
    #[serde(default)]
    pub orientation: Vec<usize>,
    #[serde(default)]
    pub velocity: Vec<usize>,
    #[serde(default)]
    pub angular: Vec<usize>,
}

impl StateLayout {
    /// Every coordinate treated as a plain position.
    pub fn identity(dim: usize) -> Self {
        Self {
            position: (0..dim).collect(),
            orientation: vec![],
            velocity: vec![],
            angular: vec![],
        }
    }

    fn selected(&self, mode: EmbedMode) -> Vec<(usize, bool)> {
        let mut out: Vec<(usize, bool)> = self.position.iter().map(|&i| (i, false)).collect();
        if matches!(mode, EmbedMode::PoseOnly | EmbedMode::FullState) {
            out.extend(self.orientation.iter().map(|&i| (i, false)));
        }
        if mode == EmbedMode::FullState {
            out.extend(self.velocity.iter().map(|&i| (i, true)));
        }
        out
    }

    fn width(&self, index: usize) -> usize {
        if self.angular.contains(&index) {
            2
        } else {
            1
        }
    }

    /// Dimension of the embedded state for `mode`.
    pub fn embedded_dim(&self, mode: EmbedMode) -> usize {
        self.selected(mode).iter().map(|&(i, _)| self.width(i)).sum()
    }

    fn max_index(&self) -> Option<usize> {
        self.position
            .iter()
            .chain(&self.orientation)
            .chain(&self.velocity)
            .copied()
            .max()
    }
}

/// Positive per-dimension scale applied after embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingWeights {
    pub w: Vec<f64>,
}

impl ScalingWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(bad) = w.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidArgument(format!("scaling weights must be positive, got {bad}")));
        }
        Ok(Self { w })
    }

    pub fn ones(dim: usize) -> Self {
        Self { w: vec![1.0; dim] }
    }

    /// One for positions and orientations, one half for velocities.
    pub fn default_for(layout: &StateLayout, mode: EmbedMode) -> Self {
        let mut w = Vec::new();
        for (i, is_velocity) in layout.selected(mode) {
            let value = if is_velocity { 0.5 } else { 1.0 };
            w.extend(std::iter::repeat_n(value, layout.width(i)));
        }
        Self { w }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }
}

/// Embeds every state into the selected sub-space and scales it elementwise.
pub fn embed(traj: &Trajectory, weights: &ScalingWeights, layout: &StateLayout, mode: EmbedMode) -> Result<Trajectory> {
    let dim = layout.embedded_dim(mode);
    if weights.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: weights.dim() });
    }
    if let Some(max) = layout.max_index() {
        if max >= traj.state_dim() {
            return Err(Error::InvalidArgument(format!(
                "state layout references index {max} but states have dimension {}",
                traj.state_dim()
            )));
        }
    }
    let selected = layout.selected(mode);
    let states = traj
        .states
        .iter()
        .map(|s| {
            let mut out = Vec::with_capacity(dim);
            for &(i, _) in &selected {
                if layout.angular.contains(&i) {
                    out.push(s[i].cos());
                    out.push(s[i].sin());
                } else {
                    out.push(s[i]);
                }
            }
            for (x, w) in out.iter_mut().zip(&weights.w) {
                *x *= w;
            }
            DVector::from_vec(out)
        })
        .collect();
    Ok(Trajectory {
        states,
        controls: traj.controls.clone(),
        dt: traj.dt,
        meta: traj.meta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cartpole_layout() -> StateLayout {
        StateLayout {
            position: vec![0, 1],
            orientation: vec![],
            velocity: vec![2, 3],
            angular: vec![1],
        }
    }

    #[test]
    fn unit_weights_full_state_is_identity() {
        let states = vec![DVector::from_vec(vec![1.0, 2.0, 3.0]), DVector::from_vec(vec![4.0, 5.0, 6.0])];
        let t = Trajectory::from_states(states, 0.1).unwrap();
        let layout = StateLayout::identity(3);
        let e = embed(&t, &ScalingWeights::ones(3), &layout, EmbedMode::FullState).unwrap();
        assert_eq!(e.states, t.states);
    }

    #[test]
    fn cartpole_so2_embedding() {
        let s = DVector::from_vec(vec![0.3, PI / 2.0, -1.0, 2.0]);
        let t = Trajectory::new(vec![s.clone(), s], vec![DVector::from_vec(vec![1.0])], 0.02).unwrap();
        let layout = cartpole_layout();
        assert_eq!(layout.embedded_dim(EmbedMode::FullState), 5);
        let e = embed(&t, &ScalingWeights::ones(5), &layout, EmbedMode::FullState).unwrap();
        let x = &e.states[0];
        assert!((x[0] - 0.3).abs() < 1e-15);
        assert!(x[1].abs() < 1e-15);
        assert!((x[2] - 1.0).abs() < 1e-15);
        assert_eq!(x[3], -1.0);
        assert_eq!(x[4], 2.0);
        assert_eq!(e.controls, t.controls);
    }

    #[test]
    fn velocity_weights_leave_positions_alone() {
        let states = (0..4).map(|i| DVector::from_vec(vec![i as f64, 1.0, 0.0, 0.0])).collect();
        let t = Trajectory::from_states(states, 0.1).unwrap();
        let layout = StateLayout {
            position: vec![0, 1],
            orientation: vec![],
            velocity: vec![2, 3],
            angular: vec![],
        };
        let base = embed(&t, &ScalingWeights::ones(4), &layout, EmbedMode::FullState).unwrap();
        let scaled = embed(&t, &ScalingWeights::new(vec![1.0, 1.0, 10.0, 10.0]).unwrap(), &layout, EmbedMode::FullState).unwrap();
        assert_eq!(base.states, scaled.states);
    }

    #[test]
    fn modes_select_subspaces() {
        let layout = StateLayout {
            position: vec![0, 1, 2],
            orientation: vec![3, 4, 5],
            velocity: (6..12).collect(),
            angular: vec![],
        };
        assert_eq!(layout.embedded_dim(EmbedMode::PositionOnly), 3);
        assert_eq!(layout.embedded_dim(EmbedMode::PoseOnly), 6);
        assert_eq!(layout.embedded_dim(EmbedMode::FullState), 12);
        let w = ScalingWeights::default_for(&layout, EmbedMode::FullState);
        assert_eq!(&w.w[..6], &[1.0; 6]);
        assert_eq!(&w.w[6..], &[0.5; 6]);
    }

    #[test]
    fn weight_dimension_mismatch() {
        let t = Trajectory::from_states(vec![DVector::zeros(3); 2], 0.1).unwrap();
        let layout = StateLayout::identity(3);
        assert!(embed(&t, &ScalingWeights::ones(2), &layout, EmbedMode::FullState).is_err());
    }

    #[test]
    fn unknown_mode() {
        assert!("sideways".parse::<EmbedMode>().is_err());
        assert_eq!("pose_only".parse::<EmbedMode>().unwrap(), EmbedMode::PoseOnly);
    }
}
