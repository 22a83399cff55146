mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::homology::{brute_persistence, enclosing_radius, random_cloud, sort_pairs};
use topowarm::persistence::{build_filtration_matrix, rips_persistence, MIN_LIFETIME};
use topowarm::{FiltrationMatrix, PersistenceDiagram, Threshold, Trajectory};

fn matrix(d: &[Vec<f64>]) -> FiltrationMatrix {
    FiltrationMatrix::from_dense(d.len(), d.concat()).unwrap()
}

fn pairs(diag: &PersistenceDiagram) -> Vec<(usize, f64, f64)> {
    let mut v: Vec<_> = diag.features.iter().map(|f| (f.dim, f.birth, f.death)).collect();
    sort_pairs(&mut v);
    v
}

#[test]
fn random_clouds_match_textbook_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let d = random_cloud(&mut rng, 20);
        let diag = rips_persistence(&matrix(&d), 1, Threshold::Auto).unwrap();
        assert_eq!(diag.threshold, enclosing_radius(&d));
        assert_eq!(pairs(&diag), brute_persistence(&d, enclosing_radius(&d), MIN_LIFETIME));
    }
}

#[test]
fn explicit_thresholds_match_textbook_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..60 {
        let d = random_cloud(&mut rng, 14);
        let t = 0.25 * (i % 8) as f64;
        let diag = rips_persistence(&matrix(&d), 1, Threshold::Value(t)).unwrap();
        assert_eq!(pairs(&diag), brute_persistence(&d, t, MIN_LIFETIME));
    }
}

#[test]
fn connected_trajectory_dataset_has_one_component() {
    let line = |y: f64, bump: f64| {
        let states = (0..8)
            .map(|k| {
                let s = k as f64 / 7.0;
                nalgebra::DVector::from_vec(vec![s, y + bump * (std::f64::consts::PI * s).sin()])
            })
            .collect();
        Trajectory::new(states, vec![nalgebra::DVector::zeros(1); 7], 0.1).unwrap()
    };
    let trajs = [line(0.0, 0.5), line(0.0, -0.5), line(0.3, 0.1)];
    let m = build_filtration_matrix(&trajs, true).unwrap();
    let diag = rips_persistence(&m, 1, Threshold::Auto).unwrap();
    assert_eq!(diag.essential_count(0), 1);
    assert!(diag.features.iter().all(|f| f.death >= f.birth));
}

fn cloud_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=14, 2usize..=4).prop_flat_map(|(n, dim)| {
        proptest::collection::vec(proptest::collection::vec(-1.0..1.0f64, dim), n).prop_map(|pts| {
            pts.iter()
                .map(|a| pts.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()).collect())
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_leaves_diagram_unchanged(d in cloud_strategy(), seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        let m = matrix(&d);
        let mut perm: Vec<usize> = (0..d.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = pairs(&rips_persistence(&m, 1, Threshold::Auto).unwrap());
        let b = pairs(&rips_persistence(&m.permuted(&perm).unwrap(), 1, Threshold::Auto).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scaling_distances_scales_the_diagram(d in cloud_strategy(), c in 0.1f64..10.0) {
        let m = matrix(&d);
        let a = pairs(&rips_persistence(&m, 1, Threshold::Auto).unwrap());
        let b = pairs(&rips_persistence(&m.scaled(c).unwrap(), 1, Threshold::Auto).unwrap());
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((c * x.1 - y.1).abs() <= 1e-12 * y.1.abs().max(1.0));
            prop_assert!(x.2 == y.2 || (c * x.2 - y.2).abs() <= 1e-12 * y.2.abs().max(1.0));
        }
    }
}
