//! Localization and mapping error metrics.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generalized OSPA distance and its decomposition.
///
/// `localization`, `missed` and `false_detections` are the three parts of
/// `total^p`: summed `d^p` over assigned pairs closer than `c`, and
/// `c^p / alpha` per missed truth or false estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GospaResult {
    pub total: f64,
    pub localization: f64,
    pub missed: f64,
    pub false_detections: f64,
    pub missed_count: usize,
    pub false_count: usize,
    /// `(truth index, estimate index)` of the assigned pairs.
    pub assignment: Vec<(usize, usize)>,
}

/// Minimum-cost perfect assignment on a square matrix (Hungarian method
/// with potentials). Returns the column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-indexed potentials and matching, column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = row_of[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[r - 1][col - 1] - u[r] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
            if row_of[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of[col0] = row_of[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        if row_of[col] > 0 {
            assignment[row_of[col] - 1] = col - 1;
        }
    }
    assignment
}

/// GOSPA distance between two finite point sets.
pub fn gospa(
    truth: &[Vector2<f64>],
    estimate: &[Vector2<f64>],
    p: f64,
    c: f64,
    alpha: f64,
) -> Result<GospaResult> {
    if !(p >= 1.0) || !(c > 0.0) || !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Argument(format!(
            "GOSPA needs p >= 1, c > 0 and 0 < alpha <= 2 (got {p}, {c}, {alpha})"
        )));
    }
    let (n_truth, n_est) = (truth.len(), estimate.len());
    let penalty = c.powf(p) / alpha;
    // Rows: truths then dummy rows for estimates. Columns: estimates then
    // dummy columns for truths.
    let size = n_truth + n_est;
    let mut cost = vec![vec![0.0; size]; size];
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in estimate.iter().enumerate() {
            cost[i][j] = (t - e).norm().min(c).powf(p);
        }
        for j in n_est..size {
            cost[i][j] = penalty;
        }
    }
    for row in cost.iter_mut().skip(n_truth) {
        for value in row.iter_mut().take(n_est) {
            *value = penalty;
        }
    }
    let matched = if size == 0 { Vec::new() } else { hungarian(&cost) };

    let mut result = GospaResult {
        total: 0.0,
        localization: 0.0,
        missed: 0.0,
        false_detections: 0.0,
        missed_count: 0,
        false_count: 0,
        assignment: Vec::new(),
    };
    let mut estimate_used = vec![false; n_est];
    for (i, t) in truth.iter().enumerate() {
        let j = matched[i];
        let d = if j < n_est { (t - estimate[j]).norm() } else { f64::INFINITY };
        if j < n_est && (d < c || alpha < 2.0) {
            result.localization += d.min(c).powf(p);
            result.assignment.push((i, j));
            estimate_used[j] = true;
        } else {
            result.missed_count += 1;
        }
    }
    result.false_count = estimate_used.iter().filter(|u| !**u).count();
    result.missed = penalty * result.missed_count as f64;
    result.false_detections = penalty * result.false_count as f64;
    result.total = (result.localization + penalty * (result.missed_count + result.false_count) as f64).powf(1.0 / p);
    Ok(result)
}

/// Root-mean-square of the error vectors across runs at every time step.
pub fn rmse_series(runs: &[Vec<Vector2<f64>>]) -> Result<Vec<f64>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    let horizon = first.len();
    if let Some(bad) = runs.iter().find(|r| r.len() != horizon) {
        return Err(Error::Dimension {
            expected: horizon,
            found: bad.len(),
        });
    }
    Ok((0..horizon)
        .map(|k| {
            let sq: f64 = runs.iter().map(|r| r[k].norm_squared()).sum();
            (sq / runs.len() as f64).sqrt()
        })
        .collect())
}
