//! Data association by loopy BP between the landmark-oriented variables
//! `c_i ∈ {0, .., J}` and the measurement-oriented variables
//! `d_j ∈ {0, .., I}`.
//!
//! Consistency (`c_i = j` exactly when `d_j = i`) is enforced by pairwise
//! indicator factors. Messages are kept in the scalar ratio form, where
//! `to_target[(i, j)]` is the message from `d_j` to `c_i` for `c_i = j`
//! relative to `c_i ≠ j`, and `to_measurement[(i, j)]` is the message from
//! `c_i` to `d_j` for `d_j = i` relative to `d_j ≠ i`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local evidence of the association variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationProblem {
    /// `beta[(i, 0)]` is the weight of target `i` being missed, `beta[(i, j)]`
    /// the weight of it generating measurement `j`.
    pub beta: DMatrix<f64>,
    /// Weight of measurement `j` being clutter or a new landmark. The
    /// weight of `d_j = i > 0` is 1.
    pub new_weight: Vec<f64>,
}

impl AssociationProblem {
    pub fn new(beta: DMatrix<f64>, new_weight: Vec<f64>) -> Result<Self> {
        if beta.ncols() != new_weight.len() + 1 {
            return Err(Error::Dimension {
                expected: new_weight.len() + 1,
                found: beta.ncols(),
            });
        }
        let valid = |v: &f64| *v >= 0.0 && v.is_finite();
        if !beta.iter().all(valid) || !new_weight.iter().all(valid) {
            return Err(Error::Argument(
                "association weights must be finite and non-negative".into(),
            ));
        }
        for (i, row) in beta.row_iter().enumerate() {
            if row.iter().all(|v| *v == 0.0) {
                return Err(Error::DegenerateEvidence { target: i });
            }
        }
        Ok(Self { beta, new_weight })
    }

    pub fn targets(&self) -> usize {
        self.beta.nrows()
    }

    pub fn measurements(&self) -> usize {
        self.new_weight.len()
    }
}

/// Per-Bernoulli inputs to the association weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEvidence {
    pub existence: f64,
    /// Expected missed-detection probability `E[1 - p_D]`.
    pub miss: f64,
    /// `E[p_D g(z_j | ·)]` for every measurement.
    pub detection: Vec<f64>,
}

/// Assemble association weights from Bernoulli, new-landmark and clutter evidence.
pub fn build_problem(
    targets: &[TargetEvidence],
    new_target_evidence: &[f64],
    clutter: &[f64],
) -> Result<AssociationProblem> {
    let n_meas = clutter.len();
    if new_target_evidence.len() != n_meas {
        return Err(Error::Dimension {
            expected: n_meas,
            found: new_target_evidence.len(),
        });
    }
    let negative = |v: &f64| !(*v >= 0.0);
    if new_target_evidence.iter().any(negative) || clutter.iter().any(negative) {
        return Err(Error::Argument("negative measurement evidence".into()));
    }
    let mut beta = DMatrix::zeros(targets.len(), n_meas + 1);
    for (i, t) in targets.iter().enumerate() {
        if t.detection.len() != n_meas {
            return Err(Error::Dimension {
                expected: n_meas,
                found: t.detection.len(),
            });
        }
        if !(0.0..=1.0).contains(&t.existence) || !(0.0..=1.0).contains(&t.miss) {
            return Err(Error::Argument(format!("target {i}: probability out of range")));
        }
        if t.detection.iter().any(negative) {
            return Err(Error::Argument(format!("target {i}: negative detection evidence")));
        }
        beta[(i, 0)] = (1.0 - t.existence) + t.existence * t.miss;
        for (j, &g) in t.detection.iter().enumerate() {
            beta[(i, j + 1)] = t.existence * g;
        }
    }
    let new_weight = clutter
        .iter()
        .zip(new_target_evidence)
        .map(|(c, e)| c + e)
        .collect();
    AssociationProblem::new(beta, new_weight)
}

/// Iteration controls for loopy BP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbpOptions {
    pub max_iterations: usize,
    /// Stop when no message changes by more than this, relative to its size.
    pub tolerance: f64,
    /// Fraction of the previous message kept at each update.
    pub damping: f64,
}

impl Default for LbpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            damping: 0.0,
        }
    }
}

/// Approximate association marginals. Every row sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMarginals {
    /// `I × (J+1)`: column 0 is a missed detection.
    pub target: DMatrix<f64>,
    /// `J × (I+1)`: column 0 is clutter or a new landmark.
    pub measurement: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbpOutcome {
    pub marginals: AssociationMarginals,
    /// `I × J` messages from the measurement variables to the target variables.
    pub to_target: DMatrix<f64>,
    /// `I × J` messages from the target variables to the measurement variables.
    pub to_measurement: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const TINY: f64 = 1e-300;

fn target_messages(problem: &AssociationProblem, to_measurement: &DMatrix<f64>) -> DMatrix<f64> {
    let (n_targets, n_meas) = (problem.targets(), problem.measurements());
    let mut out = DMatrix::zeros(n_targets, n_meas);
    // Leave-one-out sums are formed directly; subtracting from the full
    // sum cancels badly when one entry dominates.
    for j in 0..n_meas {
        for i in 0..n_targets {
            let others: f64 = (0..n_targets)
                .filter(|&k| k != i)
                .map(|k| to_measurement[(k, j)])
                .sum();
            out[(i, j)] = 1.0 / (problem.new_weight[j] + others).max(TINY);
        }
    }
    out
}

fn measurement_messages(problem: &AssociationProblem, to_target: &DMatrix<f64>) -> DMatrix<f64> {
    let (n_targets, n_meas) = (problem.targets(), problem.measurements());
    let mut out = DMatrix::zeros(n_targets, n_meas);
    for i in 0..n_targets {
        let weighted: Vec<f64> = (0..n_meas)
            .map(|j| problem.beta[(i, j + 1)] * to_target[(i, j)])
            .collect();
        for j in 0..n_meas {
            let others: f64 = (0..n_meas).filter(|&k| k != j).map(|k| weighted[k]).sum();
            out[(i, j)] = problem.beta[(i, j + 1)] / (problem.beta[(i, 0)] + others).max(TINY);
        }
    }
    out
}

fn marginals(
    problem: &AssociationProblem,
    to_target: &DMatrix<f64>,
    to_measurement: &DMatrix<f64>,
) -> Result<AssociationMarginals> {
    let (n_targets, n_meas) = (problem.targets(), problem.measurements());
    let mut target = DMatrix::zeros(n_targets, n_meas + 1);
    for i in 0..n_targets {
        target[(i, 0)] = problem.beta[(i, 0)];
        for j in 0..n_meas {
            target[(i, j + 1)] = problem.beta[(i, j + 1)] * to_target[(i, j)];
        }
        let total = target.row(i).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateEvidence { target: i });
        }
        target.row_mut(i).scale_mut(1.0 / total);
    }
    let mut measurement = DMatrix::zeros(n_meas, n_targets + 1);
    for j in 0..n_meas {
        measurement[(j, 0)] = problem.new_weight[j];
        for i in 0..n_targets {
            measurement[(j, i + 1)] = to_measurement[(i, j)];
        }
        let total = measurement.row(j).sum();
        if total > 0.0 && total.is_finite() {
            measurement.row_mut(j).scale_mut(1.0 / total);
        } else {
            // No explanation carries weight; report the clutter hypothesis.
            measurement.row_mut(j).fill(0.0);
            measurement[(j, 0)] = 1.0;
        }
    }
    Ok(AssociationMarginals {
        target,
        measurement,
    })
}

/// Loopy BP on the association graph.
pub fn loopy_bp(problem: &AssociationProblem, options: &LbpOptions) -> Result<LbpOutcome> {
    if !(0.0..1.0).contains(&options.damping) {
        return Err(Error::Argument(format!("damping {}", options.damping)));
    }
    let (n_targets, n_meas) = (problem.targets(), problem.measurements());
    // Start from the messages a target sends when no other target competes,
    // `beta_ij / beta_i0`. Unlike a constant start this transforms with any
    // row or column rescaling, so every iterate does too.
    let mut to_target = DMatrix::zeros(n_targets, n_meas);
    let mut to_measurement = measurement_messages(problem, &to_target);
    let mut iterations = 0;
    let mut converged = n_targets == 0 || n_meas == 0;
    while !converged && iterations < options.max_iterations {
        iterations += 1;
        to_target = target_messages(problem, &to_measurement);
        let mut next = measurement_messages(problem, &to_target);
        if options.damping > 0.0 {
            next = next * (1.0 - options.damping) + &to_measurement * options.damping;
        }
        let change = next
            .iter()
            .zip(to_measurement.iter())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(TINY))
            .fold(0.0, f64::max);
        to_measurement = next;
        converged = change <= options.tolerance;
    }
    to_target = target_messages(problem, &to_measurement);
    Ok(LbpOutcome {
        marginals: marginals(problem, &to_target, &to_measurement)?,
        to_target,
        to_measurement,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::exact_association;
    use approx::assert_relative_eq;

    fn problem(rows: &[&[f64]], w: &[f64]) -> AssociationProblem {
        let cols = w.len() + 1;
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        AssociationProblem::new(DMatrix::from_row_slice(rows.len(), cols, &flat), w.to_vec())
            .unwrap()
    }

    #[test]
    fn single_pair() {
        let out = loopy_bp(&problem(&[&[1.0, 3.0]], &[1.0]), &LbpOptions::default()).unwrap();
        assert_relative_eq!(out.marginals.target[(0, 1)], 0.75, epsilon = 1e-12);
        assert_relative_eq!(out.marginals.measurement[(0, 1)], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn no_measurements_means_missed() {
        let out = loopy_bp(&problem(&[&[0.3]], &[]), &LbpOptions::default()).unwrap();
        assert_eq!(out.marginals.target[(0, 0)], 1.0);
    }

    #[test]
    fn two_by_two_matches_enumeration() {
        let p = problem(&[&[1.0, 2.0, 0.0], &[1.0, 0.0, 2.0]], &[1.0, 1.0]);
        let out = loopy_bp(&p, &LbpOptions::default()).unwrap();
        let exact = exact_association(&p);
        assert!((&out.marginals.target - &exact.target).amax() < 1e-9);
        assert!((&out.marginals.measurement - &exact.measurement).amax() < 1e-9);
    }

    #[test]
    fn zero_row_is_degenerate() {
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let err = AssociationProblem::new(beta, vec![1.0]).unwrap_err();
        assert_eq!(err, Error::DegenerateEvidence { target: 1 });
    }

    #[test]
    fn build_from_evidence() {
        let half = TargetEvidence {
            existence: 0.5,
            miss: 0.05,
            detection: vec![0.0],
        };
        let p = build_problem(&[half], &[0.01], &[1.6e-4]).unwrap();
        assert_relative_eq!(p.beta[(0, 0)], 0.525, epsilon = 1e-15);
        assert_relative_eq!(p.new_weight[0], 0.01016, epsilon = 1e-15);

        let absent = TargetEvidence {
            existence: 0.0,
            miss: 0.05,
            detection: vec![0.7],
        };
        let p = build_problem(&[absent], &[0.0], &[1.0]).unwrap();
        assert_eq!(p.beta.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);

        assert!(matches!(build_problem(&[], &[-1.0], &[1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn damping_is_validated() {
        let opts = LbpOptions {
            damping: 1.0,
            ..LbpOptions::default()
        };
        assert!(loopy_bp(&problem(&[&[1.0, 1.0]], &[1.0]), &opts).is_err());
    }

    /// The same association graph written as a generic discrete factor
    /// graph over cardinality-one sets.
    fn generic_beliefs(p: &AssociationProblem) -> (DMatrix<f64>, DMatrix<f64>) {
        use crate::oracle::{run_set_bp, DiscreteFactorGraph, Schedule, SetDomain};
        let (n, m) = (p.targets(), p.measurements());
        let mut g = DiscreteFactorGraph::new();
        let cs: Vec<usize> = (0..n)
            .map(|_| g.add_variable(SetDomain::new(m + 1, 1).unwrap()))
            .collect();
        let ds: Vec<usize> = (0..m)
            .map(|_| g.add_variable(SetDomain::new(n + 1, 1).unwrap()))
            .collect();
        let value = |mask: u32| (mask != 0).then(|| mask.trailing_zeros() as usize);
        for i in 0..n {
            g.add_factor(&[cs[i]], |s| value(s[0]).map_or(0.0, |c| p.beta[(i, c)]))
                .unwrap();
        }
        for j in 0..m {
            g.add_factor(&[ds[j]], |s| match value(s[0]) {
                None => 0.0,
                Some(0) => p.new_weight[j],
                Some(_) => 1.0,
            })
            .unwrap();
        }
        for i in 0..n {
            for j in 0..m {
                g.add_factor(&[cs[i], ds[j]], |s| match (value(s[0]), value(s[1])) {
                    (Some(c), Some(d)) if (c == j + 1) == (d == i + 1) => 1.0,
                    _ => 0.0,
                })
                .unwrap();
            }
        }
        let out = run_set_bp(&g, Schedule::Flooding, 2000).unwrap();
        let strip = |v: usize| out.beliefs[v].values[1..].to_vec();
        let target = DMatrix::from_fn(n, m + 1, |i, c| strip(cs[i])[c]);
        let measurement = DMatrix::from_fn(m, n + 1, |j, d| strip(ds[j])[d]);
        (target, measurement)
    }

    #[test]
    fn loopy_case_matches_generic_bp_not_enumeration() {
        let p = problem(
            &[&[0.05, 0.05, 0.2729], &[0.6458, 0.1832, 0.3047]],
            &[0.01, 0.01],
        );
        let opts = LbpOptions {
            tolerance: 1e-12,
            max_iterations: 10_000,
            ..LbpOptions::default()
        };
        let out = loopy_bp(&p, &opts).unwrap();
        let (target, measurement) = generic_beliefs(&p);
        assert!((&out.marginals.target - target).amax() < 1e-9);
        assert!((&out.marginals.measurement - measurement).amax() < 1e-9);
        // The single cycle makes the fixed point overconfident.
        let exact = exact_association(&p);
        assert!(out.marginals.target[(0, 2)] > 0.95);
        assert!((exact.target[(0, 2)] - 0.766).abs() < 1e-3);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn instance(max_targets: usize, max_meas: usize) -> impl Strategy<Value = AssociationProblem> {
            (1..=max_targets, 0..=max_meas).prop_flat_map(|(n, m)| {
                (
                    prop::collection::vec(0.0..1.0f64, n * (m + 1)),
                    prop::collection::vec(0.01..1.0f64, m),
                    prop::collection::vec(0.05..1.0f64, n),
                )
                    .prop_map(move |(beta, w, miss)| {
                        let mut beta = DMatrix::from_row_slice(n, m + 1, &beta);
                        for i in 0..n {
                            beta[(i, 0)] = miss[i];
                        }
                        AssociationProblem::new(beta, w).unwrap()
                    })
            })
        }

        fn total_variation(a: &AssociationMarginals, b: &AssociationMarginals) -> f64 {
            let rows = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
                (0..x.nrows())
                    .map(|r| 0.5 * (x.row(r) - y.row(r)).abs().sum())
                    .fold(0.0, f64::max)
            };
            rows(&a.target, &b.target).max(rows(&a.measurement, &b.measurement))
        }

        proptest! {
            #[test]
            fn rows_are_stochastic(p in instance(4, 4), iters in 1usize..20) {
                let opts = LbpOptions { max_iterations: iters, ..LbpOptions::default() };
                let out = loopy_bp(&p, &opts).unwrap();
                for row in out.marginals.target.row_iter() {
                    prop_assert!((row.sum() - 1.0).abs() < 1e-12);
                }
                for row in out.marginals.measurement.row_iter() {
                    prop_assert!((row.sum() - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn row_and_column_scales_are_irrelevant(
                p in instance(4, 4),
                row_logs in prop::collection::vec(-20.0..20.0f64, 4),
                col_logs in prop::collection::vec(-20.0..20.0f64, 4),
            ) {
                // Rescaling a target's whole row, or a measurement's column
                // together with its new-landmark weight, leaves every
                // assignment's relative weight unchanged.
                let mut beta = p.beta.clone();
                let mut w = p.new_weight.clone();
                for i in 0..p.targets() {
                    beta.row_mut(i).scale_mut(row_logs[i].exp());
                }
                for j in 0..p.measurements() {
                    beta.column_mut(j + 1).scale_mut(col_logs[j].exp());
                    w[j] *= col_logs[j].exp();
                }
                let scaled = AssociationProblem::new(beta, w).unwrap();
                // A fixed number of sweeps, so both runs stop at the same iterate.
                let opts = LbpOptions { max_iterations: 60, tolerance: 0.0, damping: 0.0 };
                let a = loopy_bp(&p, &opts).unwrap();
                let b = loopy_bp(&scaled, &opts).unwrap();
                prop_assert!((&a.marginals.target - &b.marginals.target).amax() < 1e-12);
                prop_assert!((&a.marginals.measurement - &b.marginals.measurement).amax() < 1e-12);
            }

            #[test]
            fn exact_on_trees(p in prop_oneof![instance(1, 4), instance(4, 1)]) {
                let out = loopy_bp(&p, &LbpOptions::default()).unwrap();
                let exact = exact_association(&p);
                prop_assert!(total_variation(&out.marginals, &exact) < 1e-9);
            }
        }
    }
}
