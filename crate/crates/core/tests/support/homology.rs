//! Textbook persistence oracle: every simplex of the Rips 2-skeleton in one
//! boundary matrix, reduced left to right over Z/2 with no clearing, no
//! cohomology and no apparent pairs.

use rand::Rng;

/// Smallest row maximum.
pub fn enclosing_radius(d: &[Vec<f64>]) -> f64 {
    d.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).fold(f64::INFINITY, f64::min)
}

struct Simplex {
    value: f64,
    vertices: Vec<usize>,
}

/// `(dim, birth, death)` for dimensions 0 and 1, sorted, with pairs shorter
/// than `min_lifetime` dropped.
pub fn brute_persistence(d: &[Vec<f64>], threshold: f64, min_lifetime: f64) -> Vec<(usize, f64, f64)> {
    let n = d.len();
    let mut simplices: Vec<Simplex> = (0..n).map(|i| Simplex { value: 0.0, vertices: vec![i] }).collect();
    for i in 0..n {
        for j in i + 1..n {
            if d[i][j] <= threshold {
                simplices.push(Simplex { value: d[i][j], vertices: vec![i, j] });
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let v = d[i][j].max(d[i][k]).max(d[j][k]);
                if v <= threshold {
                    simplices.push(Simplex { value: v, vertices: vec![i, j, k] });
                }
            }
        }
    }
    simplices.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.vertices.len().cmp(&b.vertices.len()))
            .then(a.vertices.cmp(&b.vertices))
    });
    let index: std::collections::HashMap<Vec<usize>, usize> =
        simplices.iter().enumerate().map(|(i, s)| (s.vertices.clone(), i)).collect();

    let mut columns: Vec<Vec<usize>> = simplices
        .iter()
        .map(|s| {
            if s.vertices.len() == 1 {
                return Vec::new();
            }
            let mut faces: Vec<usize> = (0..s.vertices.len())
                .map(|skip| {
                    let face: Vec<usize> = s.vertices.iter().enumerate().filter(|&(p, _)| p != skip).map(|(_, &v)| v).collect();
                    index[&face]
                })
                .collect();
            faces.sort_unstable();
            faces
        })
        .collect();

    let mut low_owner: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut paired = vec![false; simplices.len()];
    let mut out = Vec::new();
    for j in 0..columns.len() {
        while let Some(&low) = columns[j].last() {
            let Some(&other) = low_owner.get(&low) else {
                break;
            };
            columns[j] = symmetric_difference(&columns[j], &columns[other]);
        }
        if let Some(&low) = columns[j].last() {
            low_owner.insert(low, j);
            paired[low] = true;
            paired[j] = true;
            let (birth, death) = (simplices[low].value, simplices[j].value);
            if death - birth >= min_lifetime {
                out.push((simplices[low].vertices.len() - 1, birth, death));
            }
        }
    }
    for (i, s) in simplices.iter().enumerate() {
        if !paired[i] && columns[i].is_empty() && s.vertices.len() <= 2 {
            out.push((s.vertices.len() - 1, s.value, f64::INFINITY));
        }
    }
    sort_pairs(&mut out);
    out
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                out.push(*x);
                i += 1;
            }
            (Some(x), None) => {
                out.push(*x);
                i += 1;
            }
            (_, Some(y)) => {
                out.push(*y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

pub fn sort_pairs(v: &mut [(usize, f64, f64)]) {
    v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
}

/// Euclidean distance matrix of a random cloud: up to `max_points` points in
/// 2 to 4 dimensions, on an integer grid for every third cloud so that
/// distances tie.
pub fn random_cloud<R: Rng>(rng: &mut R, max_points: usize) -> Vec<Vec<f64>> {
    let n = rng.random_range(1..=max_points);
    let dim = rng.random_range(2..=4);
    let grid = rng.random_range(0..3) == 0;
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| if grid { rng.random_range(0..3) as f64 } else { rng.random_range(-1.0..1.0) })
                .collect()
        })
        .collect();
    pts.iter()
        .map(|a| pts.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()).collect())
        .collect()
}
