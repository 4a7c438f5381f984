//! Experiment driver for the set-BP SLAM filter: dataset simulation,
//! filter runs, metric evaluation and oracle self-checks.

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod oracle;
pub mod runner;
pub mod experiment;

use std::path::{Path, PathBuf};

pub use error::{CliError, Result};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SETBP_THREADS";

/// Worker pool sized by `SETBP_THREADS`, or rayon's default when unset.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let threads: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer (got `{value}`)")))?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

/// Simulate, run every variant and evaluate one experiment below `out`:
/// `dataset/`, `results/<variant>/` and `metrics.csv` with its summary.
pub fn sweep_one(experiment: &experiment::ExperimentConfig, out: &Path) -> Result<evaluate::Evaluation> {
    let dataset = out.join("dataset");
    dataset::simulate(experiment, &dataset)?;
    let mut dirs = Vec::new();
    for variant in &experiment.variants {
        let dir = out.join("results").join(&variant.name);
        runner::run(&dataset, variant, &dir)?;
        dirs.push(dir);
    }
    let eval = evaluate::evaluate(&dirs, &dataset, None)?;
    evaluate::write_evaluation(&eval, &out.join("metrics.csv"))?;
    Ok(eval)
}

/// Output directory of one config in a sweep over several configs.
pub fn sweep_dir(out: &Path, config: &Path, configs: usize) -> PathBuf {
    if configs == 1 {
        return out.to_path_buf();
    }
    let stem = config
        .file_stem()
        .map_or_else(|| "config".into(), |s| s.to_string_lossy().into_owned());
    out.join(stem)
}
