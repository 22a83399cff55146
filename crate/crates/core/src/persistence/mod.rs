//! Time-series filtration matrices and Vietoris–Rips persistent homology.

mod diagram;
mod matrix;
mod rips;

pub use diagram::{Feature, PersistenceDiagram};
pub use matrix::{build_filtration_matrix, pair_cross_block, FiltrationMatrix};
pub use rips::{enclosing_radius, rips_persistence, Threshold, MIN_LIFETIME};

use crate::clustering::{num_classes_from_lifetimes, ClusterConfig};

/// Lifetime scale separating short-lived H1 noise from the retained H1
/// features.
///
/// Retained features are the ones counted by [`extract_num_classes`](crate::clustering::extract_num_classes). The
/// result is the midpoint between the longest noise lifetime and the shortest
/// retained lifetime, so it lies strictly above every noise feature and below
/// every retained one. Returns the filtration threshold when nothing is
/// retained.
pub fn separating_distance(diag: &PersistenceDiagram, cfg: &ClusterConfig) -> f64 {
    let lifetimes = h1_lifetimes(diag);
    let retained = num_classes_from_lifetimes(&lifetimes, cfg) - 1;
    if retained == 0 {
        return diag.threshold;
    }
    let noise = lifetimes.get(retained).copied().unwrap_or(0.0);
    0.5 * (noise + lifetimes[retained - 1])
}

/// H1 lifetimes in descending order, essential features measured up to the
/// threshold.
pub fn h1_lifetimes(diag: &PersistenceDiagram) -> Vec<f64> {
    let mut l: Vec<f64> = diag
        .in_dim(1)
        .map(|f| if f.is_essential() { diag.threshold - f.birth } else { f.lifetime() })
        .collect();
    l.sort_by(|a, b| b.total_cmp(a));
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(h1: &[(f64, f64)], threshold: f64) -> PersistenceDiagram {
        let mut features = vec![Feature { dim: 0, birth: 0.0, death: f64::INFINITY }];
        features.extend(h1.iter().map(|&(birth, death)| Feature { dim: 1, birth, death }));
        PersistenceDiagram { features, threshold }
    }

    #[test]
    fn no_h1_gives_threshold() {
        let d = diag(&[], 3.5);
        assert_eq!(separating_distance(&d, &ClusterConfig::default()), 3.5);
    }

    #[test]
    fn midpoint_of_lifetime_gap() {
        let d = diag(&[(0.5, 2.0), (0.55, 2.1), (0.01, 0.05), (0.1, 0.2)], 3.0);
        let s = separating_distance(&d, &ClusterConfig::default());
        assert!((s - 0.5 * (0.1 + 1.5)).abs() < 1e-12, "{s}");
    }

    #[test]
    fn no_noise_uses_zero_floor() {
        let d = diag(&[(0.0, 1.0), (0.0, 0.95)], 3.0);
        let s = separating_distance(&d, &ClusterConfig::default());
        assert!((s - 0.475).abs() < 1e-12, "{s}");
    }
}
