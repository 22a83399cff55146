//! Pairs of planar sine trajectories with known phase-space topology.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::clustering::FiltrationSpec;
use crate::geometry::{EmbedMode, ScalingWeights, StateLayout, Trajectory};

/// Horizontal extent of every toy trajectory; x advances at unit speed.
pub const TOY_DURATION: f64 = 2.0;

/// Default weight on the velocity coordinates of the toy filtration.
pub const TOY_VELOCITY_WEIGHT: f64 = 0.5;

/// Default knot count of a toy trajectory.
pub const TOY_KNOTS: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinePair {
    /// `y = ±sin²(πs)`: the curves meet with zero vertical velocity.
    Touching,
    /// `y = ±sin(πs)`: the curves cross with opposite vertical velocity.
    Crossing,
}

impl FromStr for SinePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "touching" => Ok(Self::Touching),
            "crossing" => Ok(Self::Crossing),
            other => Err(Error::InvalidArgument(format!("unknown sine pair `{other}`"))),
        }
    }
}

impl fmt::Display for SinePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Touching => "touching",
            Self::Crossing => "crossing",
        })
    }
}

fn curve(pair: SinePair, sign: f64, s: f64) -> (f64, f64) {
    match pair {
        SinePair::Touching => (sign * (PI * s).sin().powi(2), sign * PI * (2.0 * PI * s).sin()),
        SinePair::Crossing => (sign * (PI * s).sin(), sign * PI * (PI * s).cos()),
    }
}

/// The two trajectories of a pair, each with `len` knots and state
/// `(x, y, ẋ, ẏ)`.
pub fn sine_pair(pair: SinePair, len: usize) -> Result<[Trajectory; 2]> {
    if len < 2 {
        return Err(Error::InvalidArgument("sine pair needs at least two knots".into()));
    }
    let dt = TOY_DURATION / (len - 1) as f64;
    let make = |sign: f64| {
        let states = (0..len)
            .map(|i| {
                let s = i as f64 * dt;
                let (y, vy) = curve(pair, sign, s);
                DVector::from_vec(vec![s, y, 1.0, vy])
            })
            .collect();
        Trajectory::from_states(states, dt)
    };
    Ok([make(1.0)?, make(-1.0)?])
}

/// Filtration setup for the toy pairs: full state, velocities scaled down
/// by `velocity_weight`, ends connected.
pub fn toy_filtration(velocity_weight: f64) -> Result<FiltrationSpec> {
    Ok(FiltrationSpec {
        layout: StateLayout::identity(4),
        mode: EmbedMode::FullState,
        weights: ScalingWeights::new(vec![1.0, 1.0, velocity_weight, velocity_weight])?,
        connect_endpoints: true,
        resample: None,
        landmark_radius: None,
    })
}
