//! Bidirectional RRT with the connect heuristic in translation space.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocp::ObstacleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrtOptions {
    /// Sampling box corners.
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub step: f64,
    /// Spacing of collision checks along an edge.
    pub resolution: f64,
    /// Required signed distance to every obstacle.
    pub clearance: f64,
    pub max_nodes: usize,
    pub shortcut_iterations: usize,
}

impl Default for RrtOptions {
    fn default() -> Self {
        Self {
            lo: [-4.0; 3],
            hi: [3.0; 3],
            step: 0.3,
            resolution: 0.02,
            clearance: 0.1,
            max_nodes: 20_000,
            shortcut_iterations: 200,
        }
    }
}

struct Tree {
    nodes: Vec<Vector3<f64>>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: Vector3<f64>) -> Self {
        Self {
            nodes: vec![root],
            parent: vec![0],
        }
    }

    fn nearest(&self, q: &Vector3<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn add(&mut self, q: Vector3<f64>, parent: usize) -> usize {
        self.nodes.push(q);
        self.parent.push(parent);
        self.nodes.len() - 1
    }

    fn path_to_root(&self, mut i: usize) -> Vec<Vector3<f64>> {
        let mut out = vec![self.nodes[i]];
        while i != 0 {
            i = self.parent[i];
            out.push(self.nodes[i]);
        }
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

struct Planner<'a> {
    obstacles: &'a ObstacleSet,
    opts: &'a RrtOptions,
}

impl Planner<'_> {
    fn point_free(&self, p: &Vector3<f64>) -> bool {
        self.obstacles.is_empty() || self.obstacles.signed_distance(p) >= self.opts.clearance
    }

    fn edge_free(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        let steps = ((b - a).norm() / self.opts.resolution).ceil().max(1.0) as usize;
        (0..=steps).all(|i| self.point_free(&a.lerp(b, i as f64 / steps as f64)))
    }

    fn extend(&self, tree: &mut Tree, q: &Vector3<f64>) -> Extend {
        let near = tree.nearest(q);
        let from = tree.nodes[near];
        let delta = q - from;
        let dist = delta.norm();
        let (target, reached) = if dist <= self.opts.step {
            (*q, true)
        } else {
            (from + delta * (self.opts.step / dist), false)
        };
        if !self.edge_free(&from, &target) {
            return Extend::Trapped;
        }
        let id = tree.add(target, near);
        if reached {
            Extend::Reached(id)
        } else {
            Extend::Advanced(id)
        }
    }

    fn connect(&self, tree: &mut Tree, q: &Vector3<f64>) -> Extend {
        loop {
            match self.extend(tree, q) {
                Extend::Advanced(_) => continue,
                other => return other,
            }
        }
    }

    fn shortcut<R: Rng>(&self, path: &mut Vec<Vector3<f64>>, rng: &mut R) {
        for _ in 0..self.opts.shortcut_iterations {
            if path.len() < 3 {
                break;
            }
            let i = rng.random_range(0..path.len() - 2);
            let j = rng.random_range(i + 2..path.len());
            if self.edge_free(&path[i], &path[j]) {
                path.drain(i + 1..j);
            }
        }
        // Final greedy pass: from each kept vertex jump to the furthest visible one.
        let mut out = vec![path[0]];
        let mut i = 0;
        while i + 1 < path.len() {
            let mut j = path.len() - 1;
            while j > i + 1 && !self.edge_free(&path[i], &path[j]) {
                j -= 1;
            }
            out.push(path[j]);
            i = j;
        }
        *path = out;
    }
}

/// Plans a collision-free polyline from `start` to `goal`, shortcut-smoothed.
/// The first and last vertices equal `start` and `goal` exactly.
pub fn rrt_connect<R: Rng>(
    start: [f64; 3],
    goal: [f64; 3],
    obstacles: &ObstacleSet,
    opts: &RrtOptions,
    rng: &mut R,
) -> Result<Vec<[f64; 3]>> {
    let planner = Planner { obstacles, opts };
    let (s, g) = (Vector3::from(start), Vector3::from(goal));
    if !planner.point_free(&s) || !planner.point_free(&g) {
        return Err(Error::Planner("start or goal in collision".into()));
    }
    let mut path = if planner.edge_free(&s, &g) {
        vec![s, g]
    } else {
        let mut a = Tree::new(s);
        let mut b = Tree::new(g);
        let mut a_is_start = true;
        let mut found = None;
        while a.nodes.len() + b.nodes.len() < opts.max_nodes {
            let q = Vector3::from_fn(|k, _| rng.random_range(opts.lo[k]..opts.hi[k]));
            let new = match planner.extend(&mut a, &q) {
                Extend::Trapped => None,
                Extend::Reached(i) | Extend::Advanced(i) => Some(i),
            };
            if let Some(i) = new {
                let qa = a.nodes[i];
                if let Extend::Reached(j) = planner.connect(&mut b, &qa) {
                    found = Some((i, j));
                    break;
                }
            }
            std::mem::swap(&mut a, &mut b);
            a_is_start = !a_is_start;
        }
        let (i, j) = found.ok_or_else(|| Error::Planner(format!("no path within {} nodes", opts.max_nodes)))?;
        let (ts, tg, is, ig) = if a_is_start { (&a, &b, i, j) } else { (&b, &a, j, i) };
        let mut p = ts.path_to_root(is);
        p.reverse();
        let tail = tg.path_to_root(ig);
        p.extend(tail.into_iter().skip(1));
        p
    };
    planner.shortcut(&mut path, rng);
    Ok(path.iter().map(|v| [v.x, v.y, v.z]).collect())
}

/// Resamples a polyline to `n` points evenly spaced in arc length.
pub fn arc_length_resample(path: &[[f64; 3]], n: usize) -> Result<Vec<[f64; 3]>> {
    if path.is_empty() || n < 2 {
        return Err(Error::InvalidArgument("need a nonempty path and at least two samples".into()));
    }
    let pts: Vec<Vector3<f64>> = path.iter().map(|&p| Vector3::from(p)).collect();
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        if i == 0 {
            out.push(path[0]);
            continue;
        }
        if i == n - 1 {
            out.push(*path.last().unwrap());
            continue;
        }
        let s = total * i as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let a = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let p = pts[seg].lerp(&pts[seg + 1], a);
        out.push([p.x, p.y, p.z]);
    }
    Ok(out)
}
