//! Simulated datasets: a manifest plus one NDJSON file per trial.

use std::path::Path;

use nalgebra::{Matrix4, Vector2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use setbp::scenario::{generate, Origin, ScenarioConfig};

use crate::error::{CliError, Result};
use crate::io::{create_dir, read_json, read_ndjson, trial_file, write_json, write_ndjson, MANIFEST};
use crate::experiment::{ExperimentConfig, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub trials: usize,
    pub base_seed: u64,
    pub steady_state_after: usize,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum DatasetRecord {
    Header {
        trial: usize,
        seed: u64,
        landmarks: Vec<Vector2<f64>>,
        initial_state: Vector4<f64>,
        /// Mean of the filter's initial sensor prior.
        prior_mean: Vector4<f64>,
        prior_cov: [[f64; 4]; 4],
    },
    Scan {
        k: usize,
        /// True sensor state at this scan.
        state: Vector4<f64>,
        measurements: Vec<Vector2<f64>>,
        /// Evaluation only; the filter never reads them.
        origins: Vec<Origin>,
        birth_hints: Vec<Vector2<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialScan {
    pub k: usize,
    pub state: Vector4<f64>,
    pub measurements: Vec<Vector2<f64>>,
    pub birth_hints: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub trial: usize,
    pub seed: u64,
    pub landmarks: Vec<Vector2<f64>>,
    pub prior_mean: Vector4<f64>,
    pub prior_cov: Matrix4<f64>,
    pub scans: Vec<TrialScan>,
}

fn simulate_trial(experiment: &ExperimentConfig, trial: usize) -> Result<Vec<DatasetRecord>> {
    let seed = experiment.trial_seed(trial);
    let scenario = ScenarioConfig {
        seed,
        ..experiment.scenario.clone()
    };
    let truth = generate(&scenario)?;
    let mut records = Vec::with_capacity(truth.scans.len() + 1);
    records.push(DatasetRecord::Header {
        trial,
        seed,
        landmarks: truth.landmarks.clone(),
        initial_state: truth.trajectory[0].to_vector(),
        prior_mean: truth.prior_mean,
        prior_cov: scenario.initial_cov,
    });
    for scan in truth.scans {
        records.push(DatasetRecord::Scan {
            k: scan.time_index,
            state: truth.trajectory[scan.time_index].to_vector(),
            measurements: scan.measurements,
            origins: scan.origins,
            birth_hints: scan.birth_hints,
        });
    }
    Ok(records)
}

/// Generate every trial of `experiment` into `out`.
pub fn simulate(experiment: &ExperimentConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    (0..experiment.trials).into_par_iter().try_for_each(|trial| {
        let records = simulate_trial(experiment, trial)?;
        write_ndjson(&trial_file(out, trial), &records)
    })?;
    write_json(
        &out.join(MANIFEST),
        &DatasetManifest {
            schema_version: SCHEMA_VERSION,
            trials: experiment.trials,
            base_seed: experiment.base_seed,
            steady_state_after: experiment.steady_state_after,
            scenario: experiment.scenario.clone(),
        },
    )
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(CliError::Input(format!("{} is not a dataset (no {MANIFEST})", dir.display())));
    }
    read_json(&path)
}

fn parse_trial(path: &Path, records: Vec<DatasetRecord>) -> Result<TrialData> {
    let bad = |what: &str| CliError::Input(format!("{}: {what}", path.display()));
    let mut iter = records.into_iter();
    let Some(DatasetRecord::Header {
        trial,
        seed,
        landmarks,
        prior_mean,
        prior_cov,
        ..
    }) = iter.next()
    else {
        return Err(bad("first record is not a header"));
    };
    let mut scans = Vec::new();
    for record in iter {
        match record {
            DatasetRecord::Scan {
                k,
                state,
                measurements,
                birth_hints,
                ..
            } => {
                if k != scans.len() + 1 {
                    return Err(bad(&format!("scan {k} out of order")));
                }
                scans.push(TrialScan {
                    k,
                    state,
                    measurements,
                    birth_hints,
                });
            }
            DatasetRecord::Header { .. } => return Err(bad("second header")),
        }
    }
    Ok(TrialData {
        trial,
        seed,
        landmarks,
        prior_mean,
        prior_cov: Matrix4::from_fn(|r, c| prior_cov[r][c]),
        scans,
    })
}

pub fn load_trial(dir: &Path, trial: usize) -> Result<TrialData> {
    let path = trial_file(dir, trial);
    let data = parse_trial(&path, read_ndjson(&path)?)?;
    if data.trial != trial {
        return Err(CliError::Input(format!(
            "{} holds trial {} instead of {trial}",
            path.display(),
            data.trial
        )));
    }
    Ok(data)
}
