use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use topowarm::clustering::{ClusterConfig, FiltrationSpec};
use topowarm::datagen::{RrtOptions, SampleSpec};
use topowarm::solver::SolverOptions;
use topowarm::tasks::{CartpoleTask, QuadrotorTask, Task};
use topowarm::ScalingWeights;
use topowarm_bench::TrainingConfig;

/// A named task with default settings, or a fully specified one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskConfig {
    Preset(String),
    Full(Task),
}

impl TaskConfig {
    pub fn resolve(&self) -> anyhow::Result<Task> {
        match self {
            TaskConfig::Full(t) => Ok(t.clone()),
            TaskConfig::Preset(name) => preset(name),
        }
    }
}

pub fn preset(name: &str) -> anyhow::Result<Task> {
    Ok(match name {
        "cartpole" => Task::Cartpole(CartpoleTask::default()),
        "quadrotor" => Task::Quadrotor(QuadrotorTask::single_cylinder()),
        "quadrotor-three" => Task::Quadrotor(QuadrotorTask::three_cylinders()),
        other => bail!("unknown task preset `{other}` (expected cartpole, quadrotor or quadrotor-three)"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSettings {
    pub count: usize,
    /// Defaults to the task's usual value when absent.
    pub per_start: Option<usize>,
    pub max_failures: usize,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        Self {
            count: 100,
            per_start: None,
            max_failures: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub instances: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self { instances: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleSettings {
    pub counts: Vec<usize>,
    pub knots: Vec<usize>,
    pub repeats: usize,
}

impl Default for ScaleSettings {
    fn default() -> Self {
        Self {
            counts: vec![1, 10, 20, 40, 60, 80, 100],
            knots: vec![20],
            repeats: 3,
        }
    }
}

/// Artifact locations, relative to the output directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub diagram: PathBuf,
    pub labels: PathBuf,
    pub models: PathBuf,
    pub report: PathBuf,
    pub traces: PathBuf,
    pub scaling: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "dataset.jsonl".into(),
            diagram: "diagram.json".into(),
            labels: "labels.json".into(),
            models: "models".into(),
            report: "report.json".into(),
            traces: "traces.csv".into(),
            scaling: "scaling.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: TaskConfig,
    pub seed: u64,
    pub dataset: DatasetSettings,
    pub cluster: ClusterConfig,
    /// Replaces the task's filtration weights when present.
    pub weights: Option<Vec<f64>>,
    pub solver: SolverOptions,
    pub rrt: RrtOptions,
    pub training: TrainingConfig,
    pub bench: BenchSettings,
    pub scale: ScaleSettings,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskConfig::Preset("cartpole".into()),
            seed: 0,
            dataset: DatasetSettings::default(),
            cluster: ClusterConfig::default(),
            weights: None,
            solver: SolverOptions::default(),
            rrt: RrtOptions::default(),
            training: TrainingConfig::default(),
            bench: BenchSettings::default(),
            scale: ScaleSettings::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn filtration_spec(&self, task: &Task) -> anyhow::Result<FiltrationSpec> {
        let mut spec = task.filtration_spec()?;
        if let Some(w) = &self.weights {
            spec.weights = ScalingWeights::new(w.clone())?;
        }
        Ok(spec)
    }

    pub fn sample_spec(&self, task: Task) -> SampleSpec {
        let mut s = SampleSpec::new(task, self.dataset.count, self.seed);
        if let Some(p) = self.dataset.per_start {
            s.per_start = p;
        }
        s.max_failures = self.dataset.max_failures;
        s.solver = self.solver;
        s.rrt = self.rrt.clone();
        s
    }
}
