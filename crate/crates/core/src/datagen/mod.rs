//! Offline dataset generation: sample instances, seed the solver, keep good
//! solutions.

mod rrt;

pub use rrt::{arc_length_resample, rrt_connect, RrtOptions};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::geometry::Trajectory;
use crate::ocp::OCProblem;
use crate::solver::{solve, SolverOptions, SolverResult};
use crate::tasks::{CartpoleTask, QuadrotorTask, Task};

/// Solver telemetry stored with each record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMeta {
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
    pub max_gap: f64,
    /// Index of the sampled instance the record belongs to.
    pub instance: usize,
    /// Seed attempt within the instance.
    pub attempt: usize,
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub dt: f64,
    /// Problem parameters: start state (cartpole) or start position (quadrotor).
    pub start: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    pub solve_meta: SolveMeta,
}

impl DatasetRecord {
    pub fn from_solution(start: &[f64], dt: f64, r: &SolverResult, instance: usize, attempt: usize) -> Self {
        Self {
            states: r.xs.iter().map(|x| x.as_slice().to_vec()).collect(),
            controls: r.us.iter().map(|u| u.as_slice().to_vec()).collect(),
            dt,
            start: start.to_vec(),
            label: None,
            solve_meta: SolveMeta {
                converged: r.converged,
                iterations: r.iterations,
                cost: r.cost,
                max_gap: r.max_gap,
                instance,
                attempt,
            },
        }
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        let to_vecs = |v: &[Vec<f64>]| v.iter().map(|x| DVector::from_column_slice(x)).collect();
        let mut t = Trajectory::new(to_vecs(&self.states), to_vecs(&self.controls), self.dt)?;
        t.meta.start = self.start.clone();
        Ok(t)
    }
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset and checks that dimensions agree across records.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out: Vec<DatasetRecord> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("{}: line {}: {e}", path.display(), n + 1)))?;
        r.trajectory()?;
        if let Some(first) = out.first() {
            let shape = |r: &DatasetRecord| (r.states.len(), r.states[0].len(), r.controls.first().map_or(0, Vec::len));
            if shape(first) != shape(&r) {
                return Err(Error::Format(format!("{}: line {} has inconsistent dimensions", path.display(), n + 1)));
            }
        }
        out.push(r);
    }
    Ok(out)
}

pub fn trajectories(records: &[DatasetRecord]) -> Result<Vec<Trajectory>> {
    records.iter().map(DatasetRecord::trajectory).collect()
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub task: Task,
    /// Total number of records.
    pub count: usize,
    /// Solutions kept per sampled instance.
    pub per_start: usize,
    /// An instance is skipped after this many rejected solves.
    pub max_failures: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub rrt: RrtOptions,
}

impl SampleSpec {
    pub fn new(task: Task, count: usize, seed: u64) -> Self {
        let per_start = match task {
            Task::Cartpole(_) => 10,
            Task::Quadrotor(_) => 1,
        };
        Self {
            task,
            count,
            per_start,
            max_failures: 20,
            seed,
            solver: SolverOptions::default(),
            rrt: RrtOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        if self.count == 0 || self.per_start == 0 {
            return Err(Error::InvalidArgument("count and per_start must be positive".into()));
        }
        Ok(())
    }
}

/// Generated records plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub records: Vec<DatasetRecord>,
    pub instances: usize,
    pub skipped: usize,
    pub solves: usize,
}

/// Per-instance random stream: identical for a given seed and index
/// regardless of scheduling.
pub fn instance_rng(seed: u64, instance: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(instance as u64);
    rng
}

struct InstanceOutcome {
    records: Vec<DatasetRecord>,
    solves: usize,
}

/// Whether a solve is good enough to be stored.
pub fn accept_solution(task: &Task, p: &OCProblem, r: &SolverResult) -> bool {
    r.converged && r.cost < task.success_cost() && task.collision_free(p, &r.xs)
}

fn run_instance(spec: &SampleSpec, instance: usize) -> Result<InstanceOutcome> {
    let mut rng = instance_rng(spec.seed, instance);
    let start = sample_start(&spec.task, &mut rng);
    let p = spec.task.problem(&start)?;
    let mut records = Vec::with_capacity(spec.per_start);
    let (mut failures, mut solves) = (0, 0);
    while records.len() < spec.per_start && failures < spec.max_failures {
        let attempt = solves;
        solves += 1;
        let seeded = match &spec.task {
            Task::Cartpole(t) => Ok(cartpole_seed(t, &p, &mut rng)),
            Task::Quadrotor(t) => quadrotor_seed(t, &p, &spec.rrt, &mut rng),
        };
        let Ok((xs, us)) = seeded else {
            failures += 1;
            continue;
        };
        let r = solve(&p, xs.as_deref(), Some(&us), &spec.solver)?;
        if accept_solution(&spec.task, &p, &r) {
            records.push(DatasetRecord::from_solution(&start, p.model.dt(), &r, instance, attempt));
        } else {
            failures += 1;
        }
    }
    if records.len() < spec.per_start {
        records.clear();
    }
    Ok(InstanceOutcome { records, solves })
}

/// Draws a start from the task range; quadrotor starts are resampled until valid.
pub fn sample_start<R: Rng>(task: &Task, rng: &mut R) -> Vec<f64> {
    match task {
        Task::Cartpole(t) => t.starts.sample(rng),
        Task::Quadrotor(t) => loop {
            let s = t.starts.sample(rng);
            if t.start_is_valid(&s) {
                break s;
            }
        },
    }
}

type Seed = (Option<Vec<DVector<f64>>>, Vec<DVector<f64>>);

/// Uniform random controls; states come from their rollout.
pub fn cartpole_seed<R: Rng>(t: &CartpoleTask, p: &OCProblem, rng: &mut R) -> Seed {
    let l = t.seed_control_limit;
    let us = (0..p.horizon - 1)
        .map(|_| DVector::from_element(1, if l > 0.0 { rng.random_range(-l..l) } else { 0.0 }))
        .collect();
    (None, us)
}

/// Planner path lifted to full states, hover controls with Gaussian noise.
pub fn quadrotor_seed<R: Rng>(t: &QuadrotorTask, p: &OCProblem, rrt: &RrtOptions, rng: &mut R) -> Result<Seed> {
    let start = [p.x0[0], p.x0[1], p.x0[2]];
    let path = rrt_connect(start, t.goal, &t.obstacles, rrt, rng)?;
    let xs = lift_path(&arc_length_resample(&path, p.horizon)?, p.model.dt());
    let model = t.model();
    let (lo, hi) = model.control_bounds();
    let noise = Normal::new(0.0, t.seed_noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let hover = model.hover_control();
    let us = (0..p.horizon - 1)
        .map(|_| DVector::from_fn(4, |i, _| (hover[i] + noise.sample(rng)).clamp(lo[i], hi[i])))
        .collect();
    Ok((Some(xs), us))
}

/// Level attitude, central-difference velocities, rest at both ends.
pub fn lift_path(points: &[[f64; 3]], dt: f64) -> Vec<DVector<f64>> {
    let n = points.len();
    (0..n)
        .map(|t| {
            let mut x = DVector::zeros(12);
            for k in 0..3 {
                x[k] = points[t][k];
                if t > 0 && t + 1 < n {
                    x[6 + k] = (points[t + 1][k] - points[t - 1][k]) / (2.0 * dt);
                }
            }
            x
        })
        .collect()
}

/// Generates `spec.count` records. Instances are solved in parallel in
/// fixed-size waves and merged in index order, so the output depends only on
/// the sample settings and not on thread count.
pub fn generate(spec: &SampleSpec) -> Result<Generated> {
    spec.validate()?;
    let mut out = Generated {
        records: Vec::with_capacity(spec.count),
        instances: 0,
        skipped: 0,
        solves: 0,
    };
    let max_instances = 100 * spec.count.div_ceil(spec.per_start) + 100;
    while out.records.len() < spec.count {
        if out.instances >= max_instances {
            return Err(Error::InvalidArgument(format!(
                "gave up after {} instances with {} of {} records",
                out.instances,
                out.records.len(),
                spec.count
            )));
        }
        let wave = (spec.count - out.records.len()).div_ceil(spec.per_start);
        let first = out.instances;
        let results: Vec<Result<InstanceOutcome>> =
            (first..first + wave).into_par_iter().map(|i| run_instance(spec, i)).collect();
        for r in results {
            let r = r?;
            out.instances += 1;
            out.solves += r.solves;
            if r.records.is_empty() {
                out.skipped += 1;
                log::debug!("instance {} skipped", out.instances - 1);
            }
            out.records.extend(r.records);
        }
    }
    out.records.truncate(spec.count);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::QuadrotorTask;

    fn tiny_cartpole(count: usize) -> SampleSpec {
        let mut spec = SampleSpec::new(Task::Cartpole(CartpoleTask::default()), count, 7);
        spec.per_start = 2;
        spec
    }

    #[test]
    fn cartpole_generation_is_deterministic_and_bounded() {
        let spec = tiny_cartpole(4);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.records.len(), 4);
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        write_dataset(&pa, &a.records).unwrap();
        write_dataset(&pb, &b.records).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
        for r in &a.records {
            assert!(r.solve_meta.converged);
            assert!(r.controls.iter().all(|u| u[0].abs() <= 10.0));
            assert_eq!(r.states.len(), 100);
        }
        let mut per_instance = std::collections::BTreeMap::new();
        for r in &a.records {
            *per_instance.entry(r.solve_meta.instance).or_insert(0) += 1;
        }
        assert!(per_instance.values().all(|&c| c == 2));
        assert_eq!(read_dataset(&pa).unwrap(), a.records);
    }

    #[test]
    fn lifted_path_rests_at_the_ends() {
        let pts: Vec<[f64; 3]> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
        let xs = lift_path(&pts, 0.5);
        assert_eq!(xs[0].rows(6, 6).norm(), 0.0);
        assert_eq!(xs[4].rows(6, 6).norm(), 0.0);
        assert!((xs[2][6] - 2.0).abs() < 1e-12);
        assert!(xs.iter().all(|x| x.rows(3, 3).norm() == 0.0));
    }

    #[test]
    fn quadrotor_seed_respects_bounds() {
        let t = QuadrotorTask::single_cylinder();
        let p = t.problem(&[-2.0, -2.0, -2.0]).unwrap();
        let mut rng = instance_rng(1, 0);
        let (xs, us) = quadrotor_seed(&t, &p, &RrtOptions::default(), &mut rng).unwrap();
        let xs = xs.unwrap();
        assert_eq!(xs.len(), 50);
        assert_eq!(us.len(), 49);
        assert_eq!(xs[0], p.x0);
        assert!(us.iter().flat_map(|u| u.iter()).all(|&f| (0.0..=5.0).contains(&f)));
        for x in &xs {
            let v = nalgebra::Vector3::new(x[0], x[1], x[2]);
            assert!(t.obstacles.signed_distance(&v) >= 0.0);
        }
    }

    #[test]
    fn malformed_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(&p, "{\"states\": 3}\n").unwrap();
        let err = read_dataset(&p).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }
}
