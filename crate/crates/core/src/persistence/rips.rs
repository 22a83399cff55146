use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use super::{Feature, FiltrationMatrix, PersistenceDiagram};
use crate::error::{Error, Result};

/// Pairs whose lifetime is below this are simultaneous birth/death artifacts.
pub const MIN_LIFETIME: f64 = 1e-12;

/// Filtration cut-off for [`rips_persistence`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    /// Enclosing radius: beyond it the complex is a cone and nothing changes.
    Auto,
    Value(f64),
}

/// Smallest row maximum of the matrix.
pub fn enclosing_radius(m: &FiltrationMatrix) -> f64 {
    if m.side() == 0 {
        return 0.0;
    }
    (0..m.side())
        .map(|i| m.row(i).iter().copied().fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (ra, rb) = if self.rank[ra as usize] < self.rank[rb as usize] { (rb, ra) } else { (ra, rb) };
        self.parent[rb as usize] = ra;
        if self.rank[ra as usize] == self.rank[rb as usize] {
            self.rank[ra as usize] += 1;
        }
        true
    }
}

#[derive(Clone, Copy)]
struct Edge {
    diam: f64,
    i: u32,
    j: u32,
}

/// Triangles are ordered by (diameter, sorted vertex tuple), packed into one
/// integer: diameter bits in the high word, 21 bits per vertex below.
type TriKey = u128;

#[inline]
fn tri_key(diam: f64, mut v: [u32; 3]) -> TriKey {
    v.sort_unstable();
    ((diam.to_bits() as u128) << 64) | ((v[0] as u128) << 42) | ((v[1] as u128) << 21) | v[2] as u128
}

#[inline]
fn tri_diam(key: TriKey) -> f64 {
    f64::from_bits((key >> 64) as u64)
}

struct Coboundary<'a> {
    m: &'a FiltrationMatrix,
    threshold: f64,
}

impl Coboundary<'_> {
    fn push_all(&self, e: Edge, heap: &mut BinaryHeap<Reverse<TriKey>>) {
        let (ri, rj) = (self.m.row(e.i as usize), self.m.row(e.j as usize));
        for k in 0..self.m.side() {
            let (dik, djk) = (ri[k], rj[k]);
            if k as u32 == e.i || k as u32 == e.j || dik > self.threshold || djk > self.threshold {
                continue;
            }
            heap.push(Reverse(tri_key(e.diam.max(dik).max(djk), [e.i, e.j, k as u32])));
        }
    }

    /// The smallest cofacet if it has the same diameter as the edge.
    ///
    /// Cofacets sharing the edge's diameter are ordered by their third vertex,
    /// so the first hit in ascending `k` is the minimum.
    fn zero_persistence_cofacet(&self, e: Edge) -> Option<TriKey> {
        let (ri, rj) = (self.m.row(e.i as usize), self.m.row(e.j as usize));
        (0..self.m.side())
            .find(|&k| k as u32 != e.i && k as u32 != e.j && ri[k] <= e.diam && rj[k] <= e.diam)
            .map(|k| tri_key(e.diam, [e.i, e.j, k as u32]))
    }
}

fn pop_pivot(heap: &mut BinaryHeap<Reverse<TriKey>>) -> Option<TriKey> {
    while let Some(Reverse(top)) = heap.pop() {
        if heap.peek() == Some(&Reverse(top)) {
            heap.pop();
            continue;
        }
        return Some(top);
    }
    None
}

/// H0 and H1 persistence of the Vietoris–Rips filtration of `m`.
///
/// H0 comes from a union–find sweep over edges. H1 is computed by reducing
/// edge coboundaries in reverse filtration order over Z/2, skipping edges
/// that already killed a component. Columns whose smallest cofacet has the
/// same diameter and is still unclaimed are paired without building their
/// coboundary; other columns are reduced with a lazily cancelled heap and
/// only the edge combination is stored.
pub fn rips_persistence(m: &FiltrationMatrix, max_dim: usize, threshold: Threshold) -> Result<PersistenceDiagram> {
    if max_dim > 1 {
        return Err(Error::InvalidArgument(format!("max_dim must be 0 or 1, got {max_dim}")));
    }
    m.validate()?;
    let n = m.side();
    if n >= 1 << 21 {
        return Err(Error::InvalidArgument("matrix side exceeds 2^21".into()));
    }
    let threshold = match threshold {
        Threshold::Auto => enclosing_radius(m),
        Threshold::Value(t) if t >= 0.0 => t,
        Threshold::Value(t) => return Err(Error::InvalidArgument(format!("negative threshold {t}"))),
    };

    let mut edges: Vec<Edge> = Vec::new();
    for i in 0..n {
        let row = m.row(i);
        for (j, &d) in row.iter().enumerate().skip(i + 1) {
            if d <= threshold {
                edges.push(Edge {
                    diam: d + 0.0,
                    i: i as u32,
                    j: j as u32,
                });
            }
        }
    }
    edges.sort_unstable_by(|a, b| a.diam.total_cmp(&b.diam).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));

    let mut features = Vec::new();
    let mut uf = UnionFind::new(n);
    let mut positive = Vec::with_capacity(edges.len());
    for (idx, e) in edges.iter().enumerate() {
        if uf.union(e.i, e.j) {
            if e.diam > MIN_LIFETIME {
                features.push(Feature { dim: 0, birth: 0.0, death: e.diam });
            }
        } else {
            positive.push(idx as u32);
        }
    }
    let components = (0..n as u32).filter(|&v| uf.find(v) == v).count();
    features.extend((0..components).map(|_| Feature {
        dim: 0,
        birth: 0.0,
        death: f64::INFINITY,
    }));

    if max_dim == 1 {
        reduce_h1(m, threshold, &edges, &positive, &mut features);
    }
    Ok(PersistenceDiagram { features, threshold })
}

fn reduce_h1(m: &FiltrationMatrix, threshold: f64, edges: &[Edge], positive: &[u32], features: &mut Vec<Feature>) {
    let cob = Coboundary { m, threshold };
    let mut pivot_owner: FxHashMap<TriKey, u32> = FxHashMap::default();
    let mut combos: FxHashMap<u32, Vec<u32>> = FxHashMap::default();
    let mut heap = BinaryHeap::new();

    for &col in positive.iter().rev() {
        let e = edges[col as usize];
        if let Some(key) = cob.zero_persistence_cofacet(e) {
            if let std::collections::hash_map::Entry::Vacant(slot) = pivot_owner.entry(key) {
                slot.insert(col);
                continue;
            }
        }

        heap.clear();
        let mut combo = vec![col];
        cob.push_all(e, &mut heap);
        loop {
            let Some(pivot) = pop_pivot(&mut heap) else {
                features.push(Feature {
                    dim: 1,
                    birth: e.diam,
                    death: f64::INFINITY,
                });
                break;
            };
            match pivot_owner.get(&pivot) {
                Some(&other) => {
                    heap.push(Reverse(pivot));
                    match combos.get(&other) {
                        Some(cols) => {
                            for &c in cols {
                                cob.push_all(edges[c as usize], &mut heap);
                            }
                            combo.extend_from_slice(cols);
                        }
                        None => {
                            cob.push_all(edges[other as usize], &mut heap);
                            combo.push(other);
                        }
                    }
                }
                None => {
                    let death = tri_diam(pivot);
                    if death - e.diam > MIN_LIFETIME {
                        features.push(Feature { dim: 1, birth: e.diam, death });
                    }
                    pivot_owner.insert(pivot, col);
                    combos.insert(col, cancel_pairs(combo));
                    break;
                }
            }
        }
    }
}

/// Z/2 normal form of a multiset of column indices.
fn cancel_pairs(mut v: Vec<u32>) -> Vec<u32> {
    v.sort_unstable();
    let mut out = Vec::with_capacity(v.len());
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if (j - i) % 2 == 1 {
            out.push(v[i]);
        }
        i = j;
    }
    out
}
