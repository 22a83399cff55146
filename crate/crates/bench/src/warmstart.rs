use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use topowarm::datagen::{accept_solution, instance_rng, sample_start, DatasetRecord};
use topowarm::learn::{
    train_mlp_regressor, train_moe, Dataset, KnnRegressor, MlpRegressor, MoeArch, MoeModel, Predictor, Splits,
    TrainOptions,
};
use topowarm::solver::{solve, SolverOptions, TracePoint};
use topowarm::tasks::Task;
use topowarm::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cold,
    Mlp,
    Knn,
    Moe,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cold, Method::Mlp, Method::Knn, Method::Moe];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cold => "cold",
            Method::Mlp => "mlp",
            Method::Knn => "knn",
            Method::Moe => "moe",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The three learned initializers.
#[derive(Debug, Clone)]
pub struct Models {
    pub mlp: MlpRegressor,
    pub knn: KnnRegressor,
    pub moe: MoeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Hidden width of the single regressor; the experts are sized to match
    /// its parameter count.
    pub single_hidden: usize,
    pub gating_hidden: usize,
    pub validation_frac: f64,
    pub knn_max_k: usize,
    pub train: TrainOptions,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            single_hidden: 200,
            gating_hidden: 50,
            validation_frac: 0.2,
            knn_max_k: 10,
            train: TrainOptions::default(),
        }
    }
}

/// Trains the single regressor, the KNN baseline and the mixture on the same
/// split. `labels` are the cluster labels of `records`.
pub fn train_models(records: &[DatasetRecord], labels: &[usize], cfg: &TrainingConfig) -> Result<Models> {
    let splits = Splits::random(records.len(), cfg.validation_frac, 0.0, cfg.train.seed)?;
    let data = Dataset::from_records(records, splits)?.with_labels(labels.to_vec())?;
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let arch = MoeArch::matched(data.input_dim(), data.shape.len(), k, cfg.single_hidden, cfg.gating_hidden);
    let (train, val) = (&data.splits.train, &data.splits.validation);
    let (mlp, _) = train_mlp_regressor(&data, train, val, cfg.single_hidden, &cfg.train)?;
    let (knn, _) = KnnRegressor::select_k(&data, train, val, 1..=cfg.knn_max_k)?;
    let moe = train_moe(&data, arch, &cfg.train)?;
    Ok(Models { mlp, knn, moe })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub task: Task,
    pub instances: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl BenchmarkConfig {
    pub fn new(task: Task, instances: usize, seed: u64) -> Self {
        Self {
            task,
            instances,
            seed,
            solver: SolverOptions::default(),
        }
    }
}

/// SHA-256 of the canonical JSON of the configuration. Every method of a
/// report ran under the configuration with this hash.
pub fn config_hash(cfg: &BenchmarkConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub method: Method,
    pub instance: usize,
    pub start: Vec<f64>,
    pub converged: bool,
    pub success: bool,
    pub iterations: usize,
    pub final_cost: f64,
    pub elapsed: f64,
    pub failure_reason: Option<String>,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub instances: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Statistics over successful solves only; `None` without successes.
    pub iterations_mean: Option<f64>,
    pub iterations_std: Option<f64>,
    pub cost_mean: Option<f64>,
    pub cost_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub task: String,
    pub instances: usize,
    pub seed: u64,
    pub config_hash: String,
    pub summaries: Vec<MethodSummary>,
    pub records: Vec<InstanceRecord>,
}

impl BenchmarkReport {
    pub fn summary(&self, m: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == m)
    }
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Per-method aggregates from raw records, in [`Method::ALL`] order.
pub fn summarize(records: &[InstanceRecord]) -> Vec<MethodSummary> {
    Method::ALL
        .iter()
        .filter_map(|&m| {
            let rs: Vec<&InstanceRecord> = records.iter().filter(|r| r.method == m).collect();
            if rs.is_empty() {
                return None;
            }
            let ok: Vec<&&InstanceRecord> = rs.iter().filter(|r| r.success).collect();
            let iters: Vec<f64> = ok.iter().map(|r| r.iterations as f64).collect();
            let costs: Vec<f64> = ok.iter().map(|r| r.final_cost).collect();
            let (iterations_mean, iterations_std) = mean_std(&iters);
            let (cost_mean, cost_std) = mean_std(&costs);
            Some(MethodSummary {
                method: m,
                instances: rs.len(),
                successes: ok.len(),
                success_rate: ok.len() as f64 / rs.len() as f64,
                iterations_mean,
                iterations_std,
                cost_mean,
                cost_std,
            })
        })
        .collect()
}

fn run_instance(cfg: &BenchmarkConfig, models: &Models, instance: usize) -> Result<Vec<InstanceRecord>> {
    // Offset the stream so benchmark starts differ from dataset starts.
    let mut rng = instance_rng(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, instance);
    let start = sample_start(&cfg.task, &mut rng);
    let p = cfg.task.problem(&start)?;
    Method::ALL
        .iter()
        .map(|&method| {
            let (mut xs, us) = match method {
                Method::Cold => cfg.task.cold_start(&p),
                Method::Mlp => models.mlp.warm_start(&start)?,
                Method::Knn => models.knn.warm_start(&start)?,
                Method::Moe => models.moe.warm_start(&start)?,
            };
            xs[0] = p.x0.clone();
            let r = solve(&p, Some(&xs), Some(&us), &cfg.solver)?;
            Ok(InstanceRecord {
                method,
                instance,
                start: start.clone(),
                converged: r.converged,
                success: accept_solution(&cfg.task, &p, &r),
                iterations: r.iterations,
                final_cost: r.cost,
                elapsed: r.elapsed,
                failure_reason: r.failure_reason.clone(),
                trace: r.cost_trace.clone(),
            })
        })
        .collect()
}

/// Solves `cfg.instances` fresh instances from every initialization under
/// identical solver options. Instances run in parallel and are merged in
/// index order.
pub fn run_benchmark(cfg: &BenchmarkConfig, models: &Models) -> Result<BenchmarkReport> {
    if cfg.instances == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one instance".into()));
    }
    let per_instance: Vec<Vec<InstanceRecord>> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| run_instance(cfg, models, i))
        .collect::<Result<_>>()?;
    let records: Vec<InstanceRecord> = per_instance.into_iter().flatten().collect();
    Ok(BenchmarkReport {
        task: cfg.task.name().into(),
        instances: cfg.instances,
        seed: cfg.seed,
        config_hash: config_hash(cfg),
        summaries: summarize(&records),
        records,
    })
}

pub fn write_report_json(path: &Path, report: &BenchmarkReport) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, report)?;
    Ok(())
}

/// One row per (method, instance, accepted iteration).
pub fn write_trace_csv(path: &Path, report: &BenchmarkReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["method", "instance", "iteration", "cost", "elapsed"]).map_err(io)?;
    for r in &report.records {
        for t in &r.trace {
            w.write_record([
                r.method.name().to_string(),
                r.instance.to_string(),
                t.iteration.to_string(),
                t.cost.to_string(),
                t.elapsed.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: Method, instance: usize, success: bool, iterations: usize, cost: f64) -> InstanceRecord {
        InstanceRecord {
            method,
            instance,
            start: vec![0.0],
            converged: success,
            success,
            iterations,
            final_cost: cost,
            elapsed: 0.0,
            failure_reason: None,
            trace: vec![],
        }
    }

    #[test]
    fn statistics_use_successful_solves_only() {
        let rs = vec![
            record(Method::Mlp, 0, true, 10, 1.0),
            record(Method::Mlp, 1, false, 200, 90.0),
            record(Method::Mlp, 2, true, 20, 3.0),
            record(Method::Cold, 0, false, 200, 80.0),
        ];
        let s = summarize(&rs);
        assert_eq!(s.len(), 2);
        let mlp = s.iter().find(|s| s.method == Method::Mlp).unwrap();
        assert_eq!((mlp.instances, mlp.successes), (3, 2));
        assert_eq!(mlp.iterations_mean, Some(15.0));
        assert_eq!(mlp.iterations_std, Some(5.0));
        assert_eq!(mlp.cost_mean, Some(2.0));
        let cold = s.iter().find(|s| s.method == Method::Cold).unwrap();
        assert_eq!(cold.success_rate, 0.0);
        assert_eq!(cold.iterations_mean, None);
    }

    #[test]
    fn config_hash_tracks_every_field() {
        let cfg = BenchmarkConfig::new(Task::Quadrotor(topowarm::tasks::QuadrotorTask::single_cylinder()), 10, 1);
        let mut other = cfg.clone();
        assert_eq!(config_hash(&cfg), config_hash(&other));
        other.solver.max_iter += 1;
        assert_ne!(config_hash(&cfg), config_hash(&other));
        assert_eq!(config_hash(&cfg).len(), 64);
    }
}
