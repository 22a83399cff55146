//! Warm-start benchmark across initialization methods and the filtration
//! scalability study.

mod scaling;
mod warmstart;

pub use scaling::{fit_power_law, scalability_study, write_scaling_csv, PowerLaw, ScalePoint, MIN_SAMPLE_TIME};
pub use warmstart::{
    config_hash, run_benchmark, summarize, train_models, write_report_json, write_trace_csv, BenchmarkConfig,
    BenchmarkReport, InstanceRecord, Method, MethodSummary, Models, TrainingConfig,
};
