//! Filter runs over a dataset.

use std::path::Path;

use nalgebra::{Vector2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use setbp::filter::{step, FilterConfig, SlamPosterior};
use setbp::seed::stream;

use crate::dataset::{load_manifest, load_trial, TrialData};
use crate::error::{CliError, Result};
use crate::io::{create_dir, read_json, read_ndjson, trial_file, write_json, write_ndjson, MANIFEST};
use crate::experiment::{Variant, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultManifest {
    pub schema_version: u32,
    pub variant: String,
    pub trials: usize,
    pub base_seed: u64,
    pub filter: FilterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ResultRecord {
    Header {
        variant: String,
        trial: usize,
        seed: u64,
    },
    Step {
        k: usize,
        /// Estimated sensor state `[x, y, vx, vy]`.
        sensor: Vector4<f64>,
        landmarks: Vec<Vector2<f64>>,
        labels: Vec<u32>,
        ess: f64,
        resampled: bool,
        n_bernoulli: usize,
        ppp_mass: f64,
        assoc_iterations: usize,
        assoc_converged: bool,
    },
}

/// Per-scan estimates of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEstimates {
    pub trial: usize,
    pub sensor: Vec<Vector4<f64>>,
    pub landmarks: Vec<Vec<Vector2<f64>>>,
}

/// Run the filter over one trial.
pub fn run_trial(data: &TrialData, variant: &Variant) -> Result<Vec<ResultRecord>> {
    let cfg = &variant.filter;
    let mut rng = stream(data.seed, "filter");
    let numerical = |e: setbp::Error| match CliError::from(e) {
        CliError::Numerical(inner) => CliError::Numerical(setbp::Error::NumericalFailure {
            time_index: match &inner {
                setbp::Error::NumericalFailure { time_index, .. } => *time_index,
                _ => 0,
            },
            reason: format!("trial {}: {inner}", data.trial),
        }),
        other => other,
    };
    let mut post = SlamPosterior::initial(&data.prior_mean, &data.prior_cov, cfg, &mut rng).map_err(numerical)?;
    let mut records = vec![ResultRecord::Header {
        variant: variant.name.clone(),
        trial: data.trial,
        seed: data.seed,
    }];
    for scan in &data.scans {
        let (next, diag) = step(&post, &scan.measurements, &scan.birth_hints, cfg, &mut rng).map_err(numerical)?;
        post = next;
        let est = post.estimate(cfg)?;
        records.push(ResultRecord::Step {
            k: scan.k,
            sensor: est.sensor.to_vector(),
            landmarks: est.landmarks,
            labels: est.labels.iter().map(|l| l.0).collect(),
            ess: diag.ess,
            resampled: diag.resampled,
            n_bernoulli: diag.n_bernoulli,
            ppp_mass: diag.ppp_mass,
            assoc_iterations: diag.assoc_iterations,
            assoc_converged: diag.assoc_converged,
        });
    }
    Ok(records)
}

/// Run `variant` on every trial of the dataset in `dataset` and write the
/// results to `out`.
pub fn run(dataset: &Path, variant: &Variant, out: &Path) -> Result<()> {
    let manifest = load_manifest(dataset)?;
    create_dir(out)?;
    (0..manifest.trials).into_par_iter().try_for_each(|trial| {
        let data = load_trial(dataset, trial)?;
        let records = run_trial(&data, variant)?;
        write_ndjson(&trial_file(out, trial), &records)
    })?;
    write_json(
        &out.join(MANIFEST),
        &ResultManifest {
            schema_version: SCHEMA_VERSION,
            variant: variant.name.clone(),
            trials: manifest.trials,
            base_seed: manifest.base_seed,
            filter: variant.filter.clone(),
        },
    )
}

pub fn load_result_manifest(dir: &Path) -> Result<ResultManifest> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(CliError::Input(format!("{} is not a results directory", dir.display())));
    }
    read_json(&path)
}

pub fn load_estimates(dir: &Path, trial: usize) -> Result<TrialEstimates> {
    let path = trial_file(dir, trial);
    let records: Vec<ResultRecord> = read_ndjson(&path)?;
    let mut estimates = TrialEstimates {
        trial,
        sensor: Vec::new(),
        landmarks: Vec::new(),
    };
    for record in records {
        match record {
            ResultRecord::Header { trial: t, .. } if t != trial => {
                return Err(CliError::Input(format!("{} holds trial {t}", path.display())));
            }
            ResultRecord::Header { .. } => {}
            ResultRecord::Step {
                k,
                sensor,
                landmarks,
                ..
            } => {
                if k != estimates.sensor.len() + 1 {
                    return Err(CliError::Input(format!("{}: step {k} out of order", path.display())));
                }
                estimates.sensor.push(sensor);
                estimates.landmarks.push(landmarks);
            }
        }
    }
    Ok(estimates)
}
