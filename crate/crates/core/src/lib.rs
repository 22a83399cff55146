//! Persistent-homology clustering of locally optimal trajectories and
//! cluster-aware warm-starting for a box-constrained feasibility-driven DDP
//! solver.

pub mod clustering;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod learn;
pub mod ocp;
pub mod persistence;
mod serde_vecs;
pub mod solver;
pub mod tasks;
pub mod toy;

pub use clustering::{
    cluster_dataset, extract_num_classes, pairwise_trajectory_distance, single_linkage, ClusterConfig, ClusterLabels,
    ClusterOutput, FiltrationSpec, TrajectoryDistanceMatrix,
};
pub use error::{Error, Result};
pub use geometry::{EmbedMode, ScalingWeights, Segment, StateLayout, Trajectory, TrajectoryMeta};
pub use persistence::{separating_distance, FiltrationMatrix, PersistenceDiagram, Threshold};
