use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

use topowarm::persistence::{build_filtration_matrix, rips_persistence};
use topowarm::{Threshold, Trajectory};

fn arcs(n: usize, knots: usize) -> Vec<Trajectory> {
    (0..n)
        .map(|i| {
            let bend = if i % 2 == 0 { 1.0 } else { -1.0 } * (0.5 + 0.01 * i as f64);
            let states = (0..knots)
                .map(|k| {
                    let s = k as f64 / (knots - 1) as f64;
                    DVector::from_vec(vec![s, bend * (std::f64::consts::PI * s).sin()])
                })
                .collect();
            Trajectory::new(states, vec![DVector::zeros(1); knots - 1], 0.1).unwrap()
        })
        .collect()
}

fn filtration(c: &mut Criterion) {
    let mut group = c.benchmark_group("filtration");
    group.sample_size(10);
    for n in [4, 8, 16] {
        let trajs = arcs(n, 20);
        group.bench_with_input(BenchmarkId::new("matrix", n * 19), &trajs, |b, t| b.iter(|| build_filtration_matrix(t, true).unwrap()));
        let m = build_filtration_matrix(&trajs, true).unwrap();
        group.bench_with_input(BenchmarkId::new("persistence", n * 19), &m, |b, m| b.iter(|| rips_persistence(m, 1, Threshold::Auto).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, filtration);
criterion_main!(benches);
