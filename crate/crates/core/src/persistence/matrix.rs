use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{segment_distance_raw, Trajectory};

const MAGIC: &[u8; 4] = b"TWFM";

/// Dense symmetric distance matrix over trajectory segments.
///
/// `index_map[row]` is `(trajectory id, segment id)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiltrationMatrix {
    side: usize,
    data: Vec<f64>,
    index_map: Vec<(usize, usize)>,
}

impl FiltrationMatrix {
    pub fn new(side: usize, data: Vec<f64>, index_map: Vec<(usize, usize)>) -> Result<Self> {
        if data.len() != side * side {
            return Err(Error::DimensionMismatch { expected: side * side, got: data.len() });
        }
        check_dim(side, index_map.len())?;
        let m = Self { side, data, index_map };
        m.validate()?;
        Ok(m)
    }

    /// Plain distance matrix (one "trajectory" per row).
    pub fn from_dense(side: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(side, data, (0..side).map(|i| (i, 0)).collect())
    }

    /// Euclidean distance matrix of a point cloud.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                check_dim(points[i].len(), points[j].len())?;
                let d = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self::from_dense(n, data)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.side + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.side..(i + 1) * self.side]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn index_map(&self) -> &[(usize, usize)] {
        &self.index_map
    }

    /// Symmetric, zero diagonal, finite and nonnegative.
    pub fn validate(&self) -> Result<()> {
        let n = self.side;
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in i + 1..n {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidMatrix(format!("non-finite entry at ({i}, {j})")));
                }
                if a < 0.0 || b < 0.0 {
                    return Err(Error::InvalidMatrix(format!("negative entry at ({i}, {j})")));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidMatrix(format!("asymmetric entry at ({i}, {j}): {a} vs {b}")));
                }
            }
        }
        Ok(())
    }

    /// Permutes rows and columns: new row `k` is old row `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_dim(self.side, perm.len())?;
        let n = self.side;
        let mut data = vec![0.0; n * n];
        for (a, &pa) in perm.iter().enumerate() {
            for (b, &pb) in perm.iter().enumerate() {
                data[a * n + b] = self.get(pa, pb);
            }
        }
        let index_map = perm.iter().map(|&p| self.index_map[p]).collect();
        Self::new(n, data, index_map)
    }

    /// Principal submatrix on the listed rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|&r| r >= self.side) {
            return Err(Error::InvalidArgument("row selection out of range".into()));
        }
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for &a in rows {
            data.extend(rows.iter().map(|&b| self.get(a, b)));
        }
        let index_map = rows.iter().map(|&r| self.index_map[r]).collect();
        Self::new(n, data, index_map)
    }

    /// Greedy farthest-point landmarks: every row lies within `radius` of some
    /// landmark. The first landmark is row 0.
    pub fn landmarks(&self, radius: f64) -> Vec<usize> {
        let n = self.side;
        let mut chosen = vec![0];
        let mut cover: Vec<f64> = (0..n).map(|j| self.get(0, j)).collect();
        loop {
            let (far, d) = cover
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, &d)| if d > acc.1 { (j, d) } else { acc });
            if d <= radius {
                return chosen;
            }
            chosen.push(far);
            for (j, c) in cover.iter_mut().enumerate() {
                *c = c.min(self.get(far, j));
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.side, self.data.iter().map(|d| d * c).collect(), self.index_map.clone())
    }

    /// Writes magic `TWFM`, little-endian u32 side, then row-major little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        let side = u32::try_from(self.side).map_err(|_| Error::Format("matrix too large".into()))?;
        w.write_all(&side.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for d in &self.data {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads the binary format; the index map is not stored and comes back as `(row, 0)`.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, expected TWFM".into()));
        }
        let mut side = [0u8; 4];
        r.read_exact(&mut side)?;
        let side = u32::from_le_bytes(side) as usize;
        let mut bytes = vec![0u8; side * side * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_dense(side, data)
    }
}

/// Segment endpoints of one trajectory packed contiguously.
struct PackedSegments {
    dim: usize,
    points: Vec<f64>,
    count: usize,
}

impl PackedSegments {
    fn new(traj: &Trajectory) -> Self {
        let dim = traj.state_dim();
        let mut points = Vec::with_capacity(traj.len() * dim);
        for s in &traj.states {
            points.extend_from_slice(s.as_slice());
        }
        Self {
            dim,
            points,
            count: traj.len() - 1,
        }
    }

    #[inline]
    fn endpoints(&self, seg: usize) -> (&[f64], &[f64]) {
        let d = self.dim;
        (&self.points[seg * d..(seg + 1) * d], &self.points[(seg + 1) * d..(seg + 2) * d])
    }
}

fn check_dataset(trajs: &[Trajectory]) -> Result<usize> {
    let first = trajs.first().ok_or(Error::Empty("trajectory dataset"))?;
    let dim = first.state_dim();
    for t in trajs {
        check_dim(dim, t.state_dim())?;
        if t.len() < 2 {
            return Err(Error::InvalidArgument("every trajectory needs at least two states".into()));
        }
    }
    Ok(dim)
}

/// Which post-processing zeroes an entry between two segments.
#[inline]
fn forced_zero(a: (usize, usize), b: (usize, usize), last: &[usize], connect_endpoints: bool) -> bool {
    if a.0 == b.0 && a.1.abs_diff(b.1) <= 1 {
        return true;
    }
    connect_endpoints && ((a.1 == 0 && b.1 == 0) || (a.1 == last[a.0] && b.1 == last[b.0]))
}

/// Segment-to-segment distance matrix with time-series post-processing.
///
/// Consecutive segments of a trajectory are at distance zero. With
/// `connect_endpoints`, all first segments are mutually at zero and so are
/// all last segments.
pub fn build_filtration_matrix(trajs: &[Trajectory], connect_endpoints: bool) -> Result<FiltrationMatrix> {
    check_dataset(trajs)?;
    let packed: Vec<PackedSegments> = trajs.iter().map(PackedSegments::new).collect();
    let last: Vec<usize> = packed.iter().map(|p| p.count - 1).collect();
    let index_map: Vec<(usize, usize)> = packed
        .iter()
        .enumerate()
        .flat_map(|(t, p)| (0..p.count).map(move |s| (t, s)))
        .collect();
    let n = index_map.len();

    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let a = index_map[i];
        let (p1, q1) = packed[a.0].endpoints(a.1);
        for (j, slot) in row.iter_mut().enumerate().skip(i + 1) {
            let b = index_map[j];
            *slot = if forced_zero(a, b, &last, connect_endpoints) {
                0.0
            } else {
                let (p2, q2) = packed[b.0].endpoints(b.1);
                segment_distance_raw(p1, q1, p2, q2)
            };
        }
    });
    for i in 0..n {
        for j in 0..i {
            data[i * n + j] = data[j * n + i];
        }
    }
    FiltrationMatrix::new(n, data, index_map)
}

/// The two-trajectory post-processed cross block: rows are segments of `t1`,
/// columns segments of `t2`.
pub fn pair_cross_block(t1: &Trajectory, t2: &Trajectory, connect_endpoints: bool) -> Result<Vec<Vec<f64>>> {
    check_dataset(&[t1.clone(), t2.clone()])?;
    let (a, b) = (PackedSegments::new(t1), PackedSegments::new(t2));
    let last = [a.count - 1, b.count - 1];
    let mut block = vec![vec![0.0; b.count]; a.count];
    for (i, row) in block.iter_mut().enumerate() {
        let (p1, q1) = a.endpoints(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = if forced_zero((0, i), (1, j), &last, connect_endpoints) {
                0.0
            } else {
                let (p2, q2) = b.endpoints(j);
                segment_distance_raw(p1, q1, p2, q2)
            };
        }
    }
    Ok(block)
}
