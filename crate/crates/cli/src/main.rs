//! `topowarm`: toy topology, dataset generation, filtration, clustering,
//! warm-start training, benchmarking and the scalability study.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::{preset, RunConfig, TaskConfig};
use topowarm::clustering::{cluster_dataset, extract_num_classes, ClusterLabels};
use topowarm::datagen::{generate, read_dataset, trajectories, write_dataset};
use topowarm::learn::{read_model, write_model, Model};
use topowarm::persistence::{h1_lifetimes, separating_distance};
use topowarm::toy::{sine_pair, toy_filtration, SinePair, TOY_KNOTS, TOY_VELOCITY_WEIGHT};
use topowarm_bench::{
    fit_power_law, run_benchmark, scalability_study, train_models, write_report_json, write_scaling_csv,
    write_trace_csv, BenchmarkConfig, Models,
};

#[derive(Parser)]
#[command(name = "topowarm", version, about = "Cluster trajectory datasets by persistent homology and benchmark warm starts")]
struct Cli {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every artifact.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Task preset used when the config names none: cartpole, quadrotor or quadrotor-three.
    #[arg(long, global = true)]
    task: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Persistence of the touching and crossing sine pairs.
    Toy,
    /// Solve sampled instances and write the dataset.
    Generate,
    /// Filtration and persistence diagram of the dataset.
    Persist,
    /// Count classes and label the dataset.
    Cluster,
    /// Train the single MLP, KNN and mixture-of-experts initializers.
    Train,
    /// Compare cold, MLP, KNN and mixture warm starts on fresh instances.
    Bench,
    /// Time the filtration over dataset sizes and fit the power law.
    Scale,
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Serialize, Deserialize)]
struct LabelsFile {
    k: usize,
    labels: Vec<usize>,
    separating_distance: f64,
    h1_lifetimes: Vec<f64>,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    fn model_path(&self, kind: &str) -> PathBuf {
        self.path(&self.cfg.paths.models).join(format!("{kind}.model"))
    }

    fn task(&self) -> anyhow::Result<topowarm::tasks::Task> {
        self.cfg.task.resolve()
    }

    fn require(&self, p: &Path, producer: &str) -> anyhow::Result<()> {
        if !p.exists() {
            bail!("missing {}: run `topowarm {producer}` first", p.display());
        }
        Ok(())
    }

    fn dataset(&self) -> anyhow::Result<Vec<topowarm::datagen::DatasetRecord>> {
        let p = self.path(&self.cfg.paths.dataset);
        self.require(&p, "generate")?;
        read_dataset(&p).with_context(|| format!("reading {}", p.display()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn cmd_toy(ctx: &Ctx) -> anyhow::Result<()> {
    let spec = toy_filtration(TOY_VELOCITY_WEIGHT)?;
    for pair in [SinePair::Touching, SinePair::Crossing] {
        let trajs = sine_pair(pair, TOY_KNOTS)?;
        let m = spec.filtration_matrix(&trajs)?;
        let diagram = spec.persistence(&m)?;
        let k = extract_num_classes(&diagram, &ctx.cfg.cluster);
        let sep = separating_distance(&diagram, &ctx.cfg.cluster);
        let path = ctx.out.join(format!("toy_{pair}.json"));
        std::fs::write(&path, diagram.to_json()?)?;
        println!("{pair}: {} persistent H1, {k} classes, separating distance {sep:.3} -> {}", k - 1, path.display());
    }
    Ok(())
}

fn cmd_generate(ctx: &Ctx) -> anyhow::Result<()> {
    let spec = ctx.cfg.sample_spec(ctx.task()?);
    let g = generate(&spec)?;
    let path = ctx.path(&ctx.cfg.paths.dataset);
    write_dataset(&path, &g.records)?;
    println!(
        "{} records from {} instances ({} skipped, {} solves) -> {}",
        g.records.len(),
        g.instances,
        g.skipped,
        g.solves,
        path.display()
    );
    Ok(())
}

fn cmd_persist(ctx: &Ctx) -> anyhow::Result<()> {
    let records = ctx.dataset()?;
    let spec = ctx.cfg.filtration_spec(&ctx.task()?)?;
    let m = spec.filtration_matrix(&trajectories(&records)?)?;
    let diagram = spec.persistence(&m)?;
    let path = ctx.path(&ctx.cfg.paths.diagram);
    std::fs::write(&path, diagram.to_json()?)?;
    let lt = h1_lifetimes(&diagram);
    println!(
        "{} filtration points, {} H1 features, longest lifetimes {:.3?} -> {}",
        m.side(),
        lt.len(),
        &lt[..lt.len().min(5)],
        path.display()
    );
    Ok(())
}

fn cmd_cluster(ctx: &Ctx) -> anyhow::Result<()> {
    let records = ctx.dataset()?;
    let spec = ctx.cfg.filtration_spec(&ctx.task()?)?;
    let out = cluster_dataset(&trajectories(&records)?, &ctx.cfg.cluster, &spec)?;
    std::fs::write(ctx.path(&ctx.cfg.paths.diagram), out.diagram.to_json()?)?;
    let file = LabelsFile {
        k: out.labels.k,
        labels: out.labels.labels.clone(),
        separating_distance: separating_distance(&out.diagram, &ctx.cfg.cluster),
        h1_lifetimes: h1_lifetimes(&out.diagram),
    };
    let path = ctx.path(&ctx.cfg.paths.labels);
    write_json(&path, &file)?;
    println!("k = {}, cluster sizes {:?} -> {}", out.labels.k, out.labels.sizes(), path.display());
    Ok(())
}

fn read_labels(ctx: &Ctx, n: usize) -> anyhow::Result<ClusterLabels> {
    let path = ctx.path(&ctx.cfg.paths.labels);
    ctx.require(&path, "cluster")?;
    let file: LabelsFile = serde_json::from_str(&std::fs::read_to_string(&path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    if file.labels.len() != n {
        bail!("{} has {} labels for {n} records", path.display(), file.labels.len());
    }
    Ok(ClusterLabels {
        k: file.k,
        labels: file.labels,
    })
}

fn cmd_train(ctx: &Ctx) -> anyhow::Result<()> {
    let records = ctx.dataset()?;
    let labels = read_labels(ctx, records.len())?;
    let mut training = ctx.cfg.training.clone();
    training.train.seed = ctx.cfg.seed;
    let models = train_models(&records, &labels.labels, &training)?;
    std::fs::create_dir_all(ctx.path(&ctx.cfg.paths.models))?;
    for model in [Model::Mlp(models.mlp), Model::Knn(models.knn), Model::Moe(models.moe)] {
        let path = ctx.model_path(model.kind());
        write_model(&path, &model)?;
        println!("{} -> {}", model.kind(), path.display());
    }
    Ok(())
}

fn load_models(ctx: &Ctx) -> anyhow::Result<Models> {
    let load = |kind: &str| -> anyhow::Result<Model> {
        let path = ctx.model_path(kind);
        ctx.require(&path, "train")?;
        read_model(&path).with_context(|| format!("reading {}", path.display()))
    };
    let (Model::Mlp(mlp), Model::Knn(knn), Model::Moe(moe)) = (load("mlp")?, load("knn")?, load("moe")?) else {
        bail!("model files hold the wrong model kinds");
    };
    Ok(Models { mlp, knn, moe })
}

fn cmd_bench(ctx: &Ctx) -> anyhow::Result<()> {
    let models = load_models(ctx)?;
    let cfg = BenchmarkConfig {
        task: ctx.task()?,
        instances: ctx.cfg.bench.instances,
        seed: ctx.cfg.seed,
        solver: ctx.cfg.solver,
    };
    let report = run_benchmark(&cfg, &models)?;
    let (json, csv) = (ctx.path(&ctx.cfg.paths.report), ctx.path(&ctx.cfg.paths.traces));
    write_report_json(&json, &report)?;
    write_trace_csv(&csv, &report)?;
    println!("{:<6} {:>9} {:>12} {:>12}", "method", "success", "iterations", "final cost");
    for s in &report.summaries {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!(
            "{:<6} {:>8.1}% {:>12} {:>12}",
            s.method.name(),
            100.0 * s.success_rate,
            fmt(s.iterations_mean),
            fmt(s.cost_mean)
        );
    }
    println!("config {} -> {}, {}", report.config_hash, json.display(), csv.display());
    Ok(())
}

fn cmd_scale(ctx: &Ctx) -> anyhow::Result<()> {
    let records = ctx.dataset()?;
    let spec = ctx.cfg.filtration_spec(&ctx.task()?)?;
    let s = &ctx.cfg.scale;
    let points = scalability_study(&trajectories(&records)?, &spec, &s.counts, &s.knots, s.repeats)?;
    let path = ctx.path(&ctx.cfg.paths.scaling);
    write_scaling_csv(&path, &points)?;
    for p in &points {
        println!("N={:<4} T={:<3} N(T-1)={:<6} {:.4}s k={}", p.trajectories, p.knots, p.segments, p.seconds, p.classes);
    }
    let fit = fit_power_law(&points)?;
    println!("exponent {:.3}, R² {:.3} -> {}", fit.exponent, fit.r_squared, path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = &cli.task {
        preset(t)?;
        cfg.task = TaskConfig::Preset(t.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let ctx = Ctx { cfg, out: cli.out };
    match cli.command {
        Command::Toy => cmd_toy(&ctx),
        Command::Generate => cmd_generate(&ctx),
        Command::Persist => cmd_persist(&ctx),
        Command::Cluster => cmd_cluster(&ctx),
        Command::Train => cmd_train(&ctx),
        Command::Bench => cmd_bench(&ctx),
        Command::Scale => cmd_scale(&ctx),
        Command::Config => {
            print!("{}", ctx.cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
