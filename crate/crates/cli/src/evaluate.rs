//! Metrics over result directories against the simulated truth.

use std::path::{Path, PathBuf};

use serde::Serialize;
use setbp::metrics::gospa;

use crate::dataset::{load_manifest, load_trial};
use crate::error::{CliError, Result};
use crate::io::write_atomic;
use crate::runner::{load_estimates, load_result_manifest};

/// GOSPA order, cutoff and alpha.
pub const GOSPA_P: f64 = 1.0;
pub const GOSPA_C: f64 = 2.0;
pub const GOSPA_ALPHA: f64 = 2.0;

/// One row per variant and scan, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub variant: String,
    pub k: usize,
    pub rmse: f64,
    pub gospa_total: f64,
    pub gospa_loc: f64,
    pub gospa_missed: f64,
    pub gospa_false: f64,
}

/// Steady-state means per trial, plus one `all` row per variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub trial: String,
    pub rmse: f64,
    pub gospa_total: f64,
    pub gospa_loc: f64,
    pub gospa_missed: f64,
    pub gospa_false: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
}

impl Evaluation {
    /// Per-trial summary rows of one variant, ordered by trial.
    pub fn trial_summaries(&self, variant: &str) -> Vec<&SummaryRow> {
        self.summary
            .iter()
            .filter(|r| r.variant == variant && r.trial != "all")
            .collect()
    }

    pub fn overall(&self, variant: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.variant == variant && r.trial == "all")
    }
}

#[derive(Default, Clone, Copy)]
struct Gospa4 {
    total: f64,
    loc: f64,
    missed: f64,
    false_: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Evaluate result directories against the dataset in `truth`. Scans with
/// `k > steady_after` form the steady-state summary; `None` uses the value
/// recorded in the dataset.
pub fn evaluate(results: &[PathBuf], truth: &Path, steady_after: Option<usize>) -> Result<Evaluation> {
    let manifest = load_manifest(truth)?;
    let steady_after = steady_after.unwrap_or(manifest.steady_state_after);
    let truths = (0..manifest.trials)
        .map(|t| load_trial(truth, t))
        .collect::<Result<Vec<_>>>()?;
    let horizon = truths.first().map_or(0, |t| t.scans.len());
    if truths.iter().any(|t| t.scans.len() != horizon) {
        return Err(CliError::Input("dataset trials have different horizons".into()));
    }
    if steady_after >= horizon {
        return Err(CliError::Input(format!(
            "no scans after steady-state index {steady_after} (horizon {horizon})"
        )));
    }

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for dir in results {
        let rm = load_result_manifest(dir)?;
        if rm.trials != manifest.trials || rm.base_seed != manifest.base_seed {
            return Err(CliError::Input(format!(
                "{}: {} trials from seed {} do not match the dataset ({} trials from seed {})",
                dir.display(),
                rm.trials,
                rm.base_seed,
                manifest.trials,
                manifest.base_seed
            )));
        }
        // errors[trial][k-1], gospas[trial][k-1]
        let mut errors = Vec::with_capacity(truths.len());
        let mut gospas = Vec::with_capacity(truths.len());
        for truth_trial in &truths {
            let est = load_estimates(dir, truth_trial.trial)?;
            if est.sensor.len() != horizon {
                return Err(CliError::Input(format!(
                    "{}: trial {} has {} steps, dataset has {horizon}",
                    dir.display(),
                    truth_trial.trial,
                    est.sensor.len()
                )));
            }
            let mut e = Vec::with_capacity(horizon);
            let mut g = Vec::with_capacity(horizon);
            for (k, scan) in truth_trial.scans.iter().enumerate() {
                let d = est.sensor[k].fixed_rows::<2>(0) - scan.state.fixed_rows::<2>(0);
                e.push(d.norm_squared());
                let r = gospa(&truth_trial.landmarks, &est.landmarks[k], GOSPA_P, GOSPA_C, GOSPA_ALPHA)?;
                g.push(Gospa4 {
                    total: r.total,
                    loc: r.localization,
                    missed: r.missed,
                    false_: r.false_detections,
                });
            }
            errors.push(e);
            gospas.push(g);
        }

        let n = truths.len() as f64;
        let mut per_k = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let row = MetricRow {
                variant: rm.variant.clone(),
                k: k + 1,
                rmse: (errors.iter().map(|e| e[k]).sum::<f64>() / n).sqrt(),
                gospa_total: gospas.iter().map(|g| g[k].total).sum::<f64>() / n,
                gospa_loc: gospas.iter().map(|g| g[k].loc).sum::<f64>() / n,
                gospa_missed: gospas.iter().map(|g| g[k].missed).sum::<f64>() / n,
                gospa_false: gospas.iter().map(|g| g[k].false_).sum::<f64>() / n,
            };
            per_k.push(row);
        }

        let steady = steady_after..horizon;
        for (t, truth_trial) in truths.iter().enumerate() {
            let g = &gospas[t][steady.clone()];
            summary.push(SummaryRow {
                variant: rm.variant.clone(),
                trial: truth_trial.trial.to_string(),
                rmse: mean(errors[t][steady.clone()].iter().copied()).sqrt(),
                gospa_total: mean(g.iter().map(|x| x.total)),
                gospa_loc: mean(g.iter().map(|x| x.loc)),
                gospa_missed: mean(g.iter().map(|x| x.missed)),
                gospa_false: mean(g.iter().map(|x| x.false_)),
            });
        }
        let tail = &per_k[steady];
        summary.push(SummaryRow {
            variant: rm.variant.clone(),
            trial: "all".into(),
            rmse: mean(tail.iter().map(|r| r.rmse)),
            gospa_total: mean(tail.iter().map(|r| r.gospa_total)),
            gospa_loc: mean(tail.iter().map(|r| r.gospa_loc)),
            gospa_missed: mean(tail.iter().map(|r| r.gospa_missed)),
            gospa_false: mean(tail.iter().map(|r| r.gospa_false)),
        });
        rows.extend(per_k);
    }

    let finite = rows
        .iter()
        .all(|r| [r.rmse, r.gospa_total, r.gospa_loc, r.gospa_missed, r.gospa_false].iter().all(|v| v.is_finite()))
        && summary
            .iter()
            .all(|r| [r.rmse, r.gospa_total, r.gospa_loc, r.gospa_missed, r.gospa_false].iter().all(|v| v.is_finite()));
    if !finite {
        return Err(CliError::Numerical(setbp::Error::NumericalFailure {
            time_index: 0,
            reason: "non-finite metric".into(),
        }));
    }
    Ok(Evaluation { rows, summary })
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Input(format!("csv: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| CliError::Input(format!("csv: {e}")))
}

/// Path of the steady-state summary written next to `out`:
/// `metrics.csv` gives `metrics_summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "metrics".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_summary.csv"))
}

pub fn write_evaluation(eval: &Evaluation, out: &Path) -> Result<()> {
    write_atomic(out, &csv_bytes(&eval.rows)?)?;
    write_atomic(&summary_path(out), &csv_bytes(&eval.summary)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{trial_file, write_json, write_ndjson, MANIFEST};
    use crate::runner::{ResultManifest, ResultRecord};
    use crate::experiment::{ExperimentConfig, SCHEMA_VERSION};
    use nalgebra::Vector4;

    /// Results that place the sensor at the truth plus a constant offset and
    /// report no landmarks.
    fn constant_offset_results(truth: &Path, out: &Path, offset: f64) {
        let manifest = load_manifest(truth).unwrap();
        std::fs::create_dir_all(out).unwrap();
        for t in 0..manifest.trials {
            let data = load_trial(truth, t).unwrap();
            let mut records = vec![ResultRecord::Header {
                variant: "v".into(),
                trial: t,
                seed: data.seed,
            }];
            for scan in &data.scans {
                records.push(ResultRecord::Step {
                    k: scan.k,
                    sensor: scan.state + Vector4::new(offset, 0.0, 0.0, 0.0),
                    landmarks: Vec::new(),
                    labels: Vec::new(),
                    ess: 1.0,
                    resampled: false,
                    n_bernoulli: 0,
                    ppp_mass: 0.0,
                    assoc_iterations: 0,
                    assoc_converged: true,
                });
            }
            write_ndjson(&trial_file(out, t), &records).unwrap();
        }
        write_json(
            &out.join(MANIFEST),
            &ResultManifest {
                schema_version: SCHEMA_VERSION,
                variant: "v".into(),
                trials: manifest.trials,
                base_seed: manifest.base_seed,
                filter: setbp::filter::FilterConfig::default(),
            },
        )
        .unwrap();
    }

    #[test]
    fn constant_series_summarizes_to_its_value() {
        let dir = tempfile::tempdir().unwrap();
        let experiment = ExperimentConfig::from_json(
            r#"{"schema_version": 1, "trials": 2, "steady_state_after": 3,
                "scenario": {"horizon": 6, "n_landmarks": 4}}"#,
        )
        .unwrap();
        let truth = dir.path().join("data");
        crate::dataset::simulate(&experiment, &truth).unwrap();
        let results = dir.path().join("res");
        constant_offset_results(&truth, &results, 0.25);
        let eval = evaluate(&[results], &truth, None).unwrap();
        assert_eq!(eval.rows.len(), 6);
        for row in &eval.rows {
            assert!((row.rmse - 0.25).abs() < 1e-12);
            // Four missed landmarks at c^p / alpha = 1 each.
            assert_eq!(row.gospa_total, 4.0);
            assert_eq!(row.gospa_missed, 4.0);
        }
        let all = eval.overall("v").unwrap();
        assert!((all.rmse - 0.25).abs() < 1e-12);
        assert_eq!(all.gospa_total, 4.0);
        assert_eq!(eval.trial_summaries("v").len(), 2);
    }

    #[test]
    fn steady_window_must_be_nonempty() {
        let dir = tempfile::tempdir().unwrap();
        let experiment = ExperimentConfig::from_json(r#"{"schema_version": 1, "trials": 1, "scenario": {"horizon": 3, "n_landmarks": 2}}"#).unwrap();
        let truth = dir.path().join("data");
        crate::dataset::simulate(&experiment, &truth).unwrap();
        let results = dir.path().join("res");
        constant_offset_results(&truth, &results, 0.0);
        assert_eq!(evaluate(&[results], &truth, None).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn summary_path_is_sibling() {
        assert_eq!(summary_path(Path::new("/x/m.csv")), Path::new("/x/m_summary.csv"));
    }
}
