//! Cluster-count extraction from H1 lifetimes and single-linkage labelling.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{embed, resample, EmbedMode, ScalingWeights, StateLayout, Trajectory};
use crate::persistence::{
    build_filtration_matrix, h1_lifetimes, pair_cross_block, rips_persistence, FiltrationMatrix, PersistenceDiagram, Threshold,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub cutoff_ratio: f64,
    pub min_lifetime: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            cutoff_ratio: 0.8,
            min_lifetime: 0.1,
        }
    }
}

impl ClusterConfig {
    pub fn new(cutoff_ratio: f64, min_lifetime: f64) -> Result<Self> {
        let cfg = Self {
            cutoff_ratio,
            min_lifetime,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_ratio > 0.0 && self.cutoff_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!("cutoff_ratio {} not in (0, 1]", self.cutoff_ratio)));
        }
        if !(self.min_lifetime >= 0.0) {
            return Err(Error::InvalidArgument(format!("min_lifetime {} is negative", self.min_lifetime)));
        }
        Ok(())
    }
}

/// Number of classes implied by a sequence of H1 lifetimes (any order).
pub fn num_classes_from_lifetimes(lifetimes: &[f64], cfg: &ClusterConfig) -> usize {
    let mut sorted = lifetimes.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut num_classes = 1;
    let mut previous = f64::INFINITY;
    for l in sorted {
        // The ratio test only applies once a previous lifetime exists; against
        // an infinite previous the literal comparison would reject everything.
        if l < cfg.min_lifetime || (previous.is_finite() && l < cfg.cutoff_ratio * previous) {
            break;
        }
        num_classes += 1;
        previous = l;
    }
    num_classes
}

/// Number of clusters: one plus the count of H1 features that survive the
/// half-life filter. Essential H1 features count with lifetime measured up
/// to the diagram threshold.
pub fn extract_num_classes(diag: &PersistenceDiagram, cfg: &ClusterConfig) -> usize {
    num_classes_from_lifetimes(&h1_lifetimes(diag), cfg)
}

/// Dense symmetric N×N matrix of trajectory-to-trajectory distances.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl TrajectoryDistanceMatrix {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        let m = FiltrationMatrix::from_dense(n, d)?;
        Ok(Self { n, d: m.data().to_vec() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.d
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        FiltrationMatrix::from_dense(self.n, self.d.clone())?.write_binary(w)
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let m = FiltrationMatrix::read_binary(r)?;
        Ok(Self {
            n: m.side(),
            d: m.data().to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub k: usize,
    pub labels: Vec<usize>,
}

impl ClusterLabels {
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.k];
        for &l in &self.labels {
            if l >= self.k {
                return Err(Error::InvalidArgument(format!("label {l} outside [0, {})", self.k)));
            }
            seen[l] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("cluster {empty} is empty")));
        }
        Ok(())
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

fn max_min_symmetric(rows: usize, cols: usize, at: impl Fn(usize, usize) -> f64) -> f64 {
    let mut row_min = vec![f64::INFINITY; rows];
    let mut col_min = vec![f64::INFINITY; cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = at(i, j);
            row_min[i] = row_min[i].min(v);
            col_min[j] = col_min[j].min(v);
        }
    }
    row_min.iter().chain(&col_min).copied().fold(0.0, f64::max)
}

/// Furthest segment of either trajectory from its nearest counterpart on the
/// other, over the post-processed two-trajectory distance block.
pub fn pairwise_trajectory_distance(t1: &Trajectory, t2: &Trajectory, connect_endpoints: bool) -> Result<f64> {
    let block = pair_cross_block(t1, t2, connect_endpoints)?;
    let cols = block.first().map_or(0, Vec::len);
    Ok(max_min_symmetric(block.len(), cols, |i, j| block[i][j]))
}

/// Trajectory distances read off the blocks of an assembled filtration matrix.
pub fn trajectory_distances(m: &FiltrationMatrix) -> Result<TrajectoryDistanceMatrix> {
    let map = m.index_map();
    let n_traj = map.iter().map(|&(t, _)| t + 1).max().unwrap_or(0);
    let mut offsets = vec![usize::MAX; n_traj + 1];
    for (row, &(t, s)) in map.iter().enumerate() {
        let grouped = if row == 0 { t == 0 && s == 0 } else { map[row - 1] == (t, s.wrapping_sub(1)) || (s == 0 && map[row - 1].0 + 1 == t) };
        if !grouped {
            return Err(Error::InvalidMatrix("index map is not grouped by trajectory".into()));
        }
        if s == 0 {
            offsets[t] = row;
        }
    }
    offsets[n_traj] = map.len();
    if offsets.contains(&usize::MAX) {
        return Err(Error::InvalidMatrix("index map skips a trajectory".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n_traj).flat_map(|a| (a + 1..n_traj).map(move |b| (a, b))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (ra, rb) = (offsets[a], offsets[b]);
            let (na, nb) = (offsets[a + 1] - ra, offsets[b + 1] - rb);
            max_min_symmetric(na, nb, |i, j| m.get(ra + i, rb + j))
        })
        .collect();
    let mut d = vec![0.0; n_traj * n_traj];
    for (&(a, b), v) in pairs.iter().zip(values) {
        d[a * n_traj + b] = v;
        d[b * n_traj + a] = v;
    }
    TrajectoryDistanceMatrix::new(n_traj, d)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage agglomeration stopped at `k` clusters.
///
/// Labels are numbered by ascending smallest member index.
pub fn single_linkage(m: &TrajectoryDistanceMatrix, k: usize) -> Result<ClusterLabels> {
    let n = m.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot form {k} clusters from {n} items")));
    }
    let mut edges: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (m.get(i, j), i, j))
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut merges = 0;
    for (_, i, j) in edges {
        if merges == n - k {
            break;
        }
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
            merges += 1;
        }
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut next = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = next;
            next += 1;
        }
        labels.push(label_of_root[r]);
    }
    Ok(ClusterLabels { k, labels })
}

/// How trajectories are mapped into filtration space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationSpec {
    pub layout: StateLayout,
    pub mode: EmbedMode,
    pub weights: ScalingWeights,
    pub connect_endpoints: bool,
    /// Knot count to resample to before embedding, if any.
    pub resample: Option<usize>,
    /// Persistence runs on a farthest-point landmark subset covering every
    /// segment within this radius. Labels still use the full matrix.
    pub landmark_radius: Option<f64>,
}

impl FiltrationSpec {
    pub fn prepare(&self, trajs: &[Trajectory]) -> Result<Vec<Trajectory>> {
        trajs
            .iter()
            .map(|t| {
                let t = match self.resample {
                    Some(len) => resample(t, len)?,
                    None => t.clone(),
                };
                embed(&t, &self.weights, &self.layout, self.mode)
            })
            .collect()
    }

    pub fn filtration_matrix(&self, trajs: &[Trajectory]) -> Result<FiltrationMatrix> {
        build_filtration_matrix(&self.prepare(trajs)?, self.connect_endpoints)
    }

    /// H0/H1 diagram of a filtration matrix, on landmarks when configured.
    pub fn persistence(&self, m: &FiltrationMatrix) -> Result<PersistenceDiagram> {
        match self.landmark_radius {
            Some(r) => rips_persistence(&m.select(&m.landmarks(r))?, 1, Threshold::Auto),
            None => rips_persistence(m, 1, Threshold::Auto),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterOutput {
    pub labels: ClusterLabels,
    pub diagram: PersistenceDiagram,
    pub distances: TrajectoryDistanceMatrix,
}

/// Embed, filter, count classes and label a trajectory dataset.
pub fn cluster_dataset(trajs: &[Trajectory], cfg: &ClusterConfig, spec: &FiltrationSpec) -> Result<ClusterOutput> {
    if trajs.len() < 2 {
        return Err(Error::InvalidArgument("clustering needs at least two trajectories".into()));
    }
    cfg.validate()?;
    let m = spec.filtration_matrix(trajs)?;
    let diagram = spec.persistence(&m)?;
    let k = extract_num_classes(&diagram, cfg).min(trajs.len());
    let distances = trajectory_distances(&m)?;
    let labels = single_linkage(&distances, k)?;
    Ok(ClusterOutput {
        labels,
        diagram,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_matrix(xs: &[f64]) -> TrajectoryDistanceMatrix {
        let n = xs.len();
        let d = (0..n * n).map(|k| (xs[k / n] - xs[k % n]).abs()).collect();
        TrajectoryDistanceMatrix::new(n, d).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> TrajectoryDistanceMatrix {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(0.0..10.0);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        TrajectoryDistanceMatrix::new(n, d).unwrap()
    }

    fn canonical(groups: Vec<Vec<usize>>, n: usize) -> Vec<usize> {
        let mut labels = vec![0; n];
        let mut groups = groups;
        groups.sort_by_key(|g| *g.iter().min().unwrap());
        for (l, g) in groups.iter().enumerate() {
            for &i in g {
                labels[i] = l;
            }
        }
        labels
    }

    /// Naive agglomeration: repeatedly merge the two clusters at minimum
    /// inter-member distance.
    fn brute_agglomerate(m: &TrajectoryDistanceMatrix, k: usize) -> Vec<usize> {
        let n = m.len();
        let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        while groups.len() > k {
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..groups.len() {
                for b in a + 1..groups.len() {
                    let link = groups[a]
                        .iter()
                        .flat_map(|&i| groups[b].iter().map(move |&j| (i, j)))
                        .map(|(i, j)| m.get(i, j))
                        .fold(f64::INFINITY, f64::min);
                    if link < best.0 {
                        best = (link, a, b);
                    }
                }
            }
            let merged = groups.remove(best.2);
            groups[best.1].extend(merged);
        }
        canonical(groups, n)
    }

    /// Prim's MST, then drop the k−1 heaviest tree edges.
    fn mst_cut(m: &TrajectoryDistanceMatrix, k: usize) -> Vec<usize> {
        let n = m.len();
        let mut in_tree = vec![false; n];
        let mut best = vec![(f64::INFINITY, 0usize); n];
        let mut tree = Vec::new();
        in_tree[0] = true;
        for j in 1..n {
            best[j] = (m.get(0, j), 0);
        }
        for _ in 1..n {
            let v = (0..n)
                .filter(|&v| !in_tree[v])
                .min_by(|&a, &b| best[a].0.total_cmp(&best[b].0))
                .unwrap();
            in_tree[v] = true;
            tree.push((best[v].0, best[v].1, v));
            for j in 0..n {
                if !in_tree[j] && m.get(v, j) < best[j].0 {
                    best[j] = (m.get(v, j), v);
                }
            }
        }
        tree.sort_by(|a, b| a.0.total_cmp(&b.0));
        tree.truncate(n - k);
        let mut parent: Vec<usize> = (0..n).collect();
        for &(_, a, b) in &tree {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        canonical(groups.into_values().collect(), n)
    }

    #[test]
    fn alg1_traces() {
        let cfg = ClusterConfig::default();
        assert_eq!(num_classes_from_lifetimes(&[], &cfg), 1);
        assert_eq!(num_classes_from_lifetimes(&[5.0, 4.5, 0.05], &cfg), 3);
        assert_eq!(num_classes_from_lifetimes(&[5.0, 1.0], &cfg), 2);
        assert_eq!(num_classes_from_lifetimes(&[0.05, 4.5, 5.0], &cfg), 3);
    }

    #[test]
    fn config_validation() {
        assert!(ClusterConfig::new(0.0, 0.1).is_err());
        assert!(ClusterConfig::new(1.0, 0.0).is_ok());
        assert!(ClusterConfig::new(0.5, -1.0).is_err());
    }

    #[test]
    fn line_groups() {
        let m = line_matrix(&[0.0, 0.1, 10.0, 10.1]);
        assert_eq!(single_linkage(&m, 2).unwrap().labels, vec![0, 0, 1, 1]);
        assert_eq!(single_linkage(&m, 1).unwrap().labels, vec![0; 4]);
        assert_eq!(single_linkage(&m, 4).unwrap().labels, vec![0, 1, 2, 3]);
        assert!(single_linkage(&m, 5).is_err());
        assert!(single_linkage(&m, 0).is_err());
    }

    #[test]
    fn matches_agglomeration_and_mst_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.random_range(1..=12);
            let m = random_matrix(&mut rng, n);
            for k in 1..=n {
                let got = single_linkage(&m, k).unwrap();
                got.validate().unwrap();
                assert_eq!(got.labels, brute_agglomerate(&m, k));
                assert_eq!(got.labels, mst_cut(&m, k));
            }
        }
    }

    fn straight(y: f64, len: usize) -> Trajectory {
        let states = (0..len).map(|i| DVector::from_vec(vec![i as f64 * 0.5, y])).collect();
        Trajectory::from_states(states, 0.1).unwrap()
    }

    #[test]
    fn parallel_lines_distance() {
        let (a, b) = (straight(0.0, 6), straight(1.0, 6));
        assert!((pairwise_trajectory_distance(&a, &b, false).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pairwise_trajectory_distance(&a, &a, false).unwrap(), 0.0);
        assert_eq!(pairwise_trajectory_distance(&a, &a, true).unwrap(), 0.0);
    }

    #[test]
    fn block_distances_agree_with_pairwise() {
        let trajs = vec![straight(0.0, 5), straight(1.0, 7), straight(3.0, 4)];
        for connect in [false, true] {
            let m = build_filtration_matrix(&trajs, connect).unwrap();
            let d = trajectory_distances(&m).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    let direct = pairwise_trajectory_distance(&trajs[a], &trajs[b], connect).unwrap();
                    assert!((d.get(a, b) - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn duplicated_dataset_is_one_cluster() {
        let t = straight(0.0, 6);
        let trajs = vec![t.clone(), t.clone(), t];
        let spec = FiltrationSpec {
            layout: StateLayout::identity(2),
            mode: EmbedMode::FullState,
            weights: ScalingWeights::ones(2),
            connect_endpoints: true,
            resample: None,
            landmark_radius: None,
        };
        let out = cluster_dataset(&trajs, &ClusterConfig::default(), &spec).unwrap();
        assert_eq!(out.labels.k, 1);
        assert_eq!(out.labels.labels, vec![0, 0, 0]);
    }

    #[test]
    fn labels_json_shape() {
        let l = ClusterLabels { k: 2, labels: vec![0, 1, 1] };
        assert_eq!(serde_json::to_string(&l).unwrap(), r#"{"k":2,"labels":[0,1,1]}"#);
    }

    proptest! {
        #[test]
        fn extracted_count_bounded_and_monotone(
            lifetimes in prop::collection::vec(0.0f64..5.0, 0..12),
            lo in 0.0f64..1.0,
            extra in 0.0f64..1.0,
        ) {
            let a = ClusterConfig { cutoff_ratio: 0.8, min_lifetime: lo };
            let b = ClusterConfig { cutoff_ratio: 0.8, min_lifetime: lo + extra };
            let ka = num_classes_from_lifetimes(&lifetimes, &a);
            let kb = num_classes_from_lifetimes(&lifetimes, &b);
            prop_assert!(ka >= 1 && ka <= lifetimes.len() + 1);
            prop_assert!(kb <= ka);
        }

        #[test]
        fn labels_invariant_under_permutation(seed in 0u64..1000, k_frac in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..10);
            let m = random_matrix(&mut rng, n);
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let pd = (0..n * n).map(|x| m.get(perm[x / n], perm[x % n])).collect();
            let pm = TrajectoryDistanceMatrix::new(n, pd).unwrap();
            let base = single_linkage(&m, k).unwrap().labels;
            let permuted = single_linkage(&pm, k).unwrap().labels;
            let same = |a: usize, b: usize| base[perm[a]] == base[perm[b]];
            for a in 0..n {
                for b in 0..n {
                    prop_assert_eq!(permuted[a] == permuted[b], same(a, b));
                }
            }
        }
    }
}
