//! Brute-force references and randomized self-checks against them.

use nalgebra::{DMatrix, Vector2};
use rand::Rng;

use crate::assoc::{loopy_bp, AssociationMarginals, AssociationProblem, LbpOptions};
use crate::error::Result;
use crate::gaussian::Gaussian;
use crate::metrics::gospa;
use crate::mixture::GaussianMixture;
use crate::rfs::{Label, PoissonProcess};
use crate::seed;
use crate::set_factors::{merge_ppps, partition_ppp};

/// Exact association marginals by enumerating every injective assignment.
pub fn exact_association(problem: &AssociationProblem) -> AssociationMarginals {
    let (n_targets, n_meas) = (problem.targets(), problem.measurements());
    let mut target = DMatrix::zeros(n_targets, n_meas + 1);
    let mut measurement = DMatrix::zeros(n_meas, n_targets + 1);
    let mut choice = vec![0usize; n_targets];

    fn visit(
        i: usize,
        used: &mut Vec<bool>,
        choice: &mut Vec<usize>,
        problem: &AssociationProblem,
        target: &mut DMatrix<f64>,
        measurement: &mut DMatrix<f64>,
    ) {
        let n_meas = problem.measurements();
        if i == choice.len() {
            let mut w: f64 = choice
                .iter()
                .enumerate()
                .map(|(t, &c)| problem.beta[(t, c)])
                .product();
            for j in 0..n_meas {
                if !used[j] {
                    w *= problem.new_weight[j];
                }
            }
            for (t, &c) in choice.iter().enumerate() {
                target[(t, c)] += w;
                if c > 0 {
                    measurement[(c - 1, t + 1)] += w;
                }
            }
            for j in 0..n_meas {
                if !used[j] {
                    measurement[(j, 0)] += w;
                }
            }
            return;
        }
        for c in 0..=n_meas {
            if c > 0 && used[c - 1] {
                continue;
            }
            choice[i] = c;
            if c > 0 {
                used[c - 1] = true;
            }
            visit(i + 1, used, choice, problem, target, measurement);
            if c > 0 {
                used[c - 1] = false;
            }
        }
    }

    let mut used = vec![false; n_meas];
    visit(
        0,
        &mut used,
        &mut choice,
        problem,
        &mut target,
        &mut measurement,
    );
    for mut row in target.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    for mut row in measurement.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    AssociationMarginals {
        target,
        measurement,
    }
}

/// GOSPA by enumerating every partial assignment.
///
/// Each candidate is costed in truth order, with pairs at or beyond the
/// cutoff counted as two unassigned points when `alpha = 2`, so the result
/// is bitwise comparable with [`crate::metrics::gospa`].
pub fn brute_force_gospa(
    truth: &[Vector2<f64>],
    estimate: &[Vector2<f64>],
    p: f64,
    c: f64,
    alpha: f64,
) -> f64 {
    let penalty = c.powf(p) / alpha;
    let mut best = f64::INFINITY;
    let mut choice: Vec<Option<usize>> = vec![None; truth.len()];
    let mut used = vec![false; estimate.len()];

    struct Ctx<'a> {
        truth: &'a [Vector2<f64>],
        estimate: &'a [Vector2<f64>],
        p: f64,
        c: f64,
        alpha: f64,
        penalty: f64,
    }

    fn cost(ctx: &Ctx, choice: &[Option<usize>]) -> f64 {
        let mut localization = 0.0;
        let mut assigned = 0;
        for (i, c) in choice.iter().enumerate() {
            if let Some(j) = c {
                let d = (ctx.truth[i] - ctx.estimate[*j]).norm();
                if d < ctx.c || ctx.alpha < 2.0 {
                    localization += d.min(ctx.c).powf(ctx.p);
                    assigned += 1;
                }
            }
        }
        let unassigned = ctx.truth.len() + ctx.estimate.len() - 2 * assigned;
        localization + ctx.penalty * unassigned as f64
    }

    fn search(i: usize, ctx: &Ctx, choice: &mut Vec<Option<usize>>, used: &mut Vec<bool>, best: &mut f64) {
        if i == choice.len() {
            *best = best.min(cost(ctx, choice));
            return;
        }
        choice[i] = None;
        search(i + 1, ctx, choice, used, best);
        for j in 0..used.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            choice[i] = Some(j);
            search(i + 1, ctx, choice, used, best);
            choice[i] = None;
            used[j] = false;
        }
    }

    let ctx = Ctx {
        truth,
        estimate,
        p,
        c,
        alpha,
        penalty,
    };
    search(0, &ctx, &mut choice, &mut used, &mut best);
    best.powf(1.0 / p)
}

/// Outcome of [`ppp_algebra_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct PppAlgebraReport {
    pub instances: usize,
    /// Instances where a merged or partitioned parameter differed from the
    /// closed form.
    pub parameter_mismatches: usize,
    /// Largest relative error of merged mass against the summed masses.
    pub max_mass_error: f64,
}

fn random_mixture(rng: &mut impl Rng) -> GaussianMixture {
    let mut mixture = GaussianMixture::new();
    for _ in 0..rng.random_range(0..5) {
        let mean = [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)];
        let variance = rng.random_range(0.01..100.0);
        mixture
            .push(rng.random_range(1e-6..2.0), Gaussian::isotropic(&mean, variance))
            .expect("positive weight");
    }
    mixture
}

/// Merge and partition factors on random Poisson intensities.
pub fn ppp_algebra_check(instances: usize, base_seed: u64) -> Result<PppAlgebraReport> {
    let mut rng = seed::stream(base_seed, "oracle-ppp");
    let mut mismatches = 0;
    let mut max_mass_error: f64 = 0.0;
    for _ in 0..instances {
        let inputs: Vec<PoissonProcess> = (0..rng.random_range(1..5))
            .map(|_| PoissonProcess::undetected(random_mixture(&mut rng)))
            .collect();
        let merged = merge_ppps(&inputs)?;
        let concatenated: Vec<_> = inputs
            .iter()
            .flat_map(|p| p.intensity.components.iter().cloned())
            .collect();
        if merged.intensity.components != concatenated || merged.label != Label::UNDETECTED {
            mismatches += 1;
        }
        let summed: f64 = inputs.iter().map(|p| p.mass()).sum();
        if summed > 0.0 {
            max_mass_error = max_mass_error.max((merged.mass() - summed).abs() / summed);
        } else if merged.mass() != 0.0 {
            max_mass_error = f64::INFINITY;
        }

        let n = rng.random_range(1..6);
        let parts = partition_ppp(&inputs[0], n)?;
        if parts.len() != n || parts.iter().any(|p| p != &inputs[0]) {
            mismatches += 1;
        }
    }
    Ok(PppAlgebraReport {
        instances,
        parameter_mismatches: mismatches,
        max_mass_error,
    })
}

/// Outcome of [`association_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationReport {
    pub instances: usize,
    /// Instances whose association graph has no cycle (one target or one
    /// measurement).
    pub tree_instances: usize,
    pub max_tree_tv: f64,
    /// Largest total-variation distance over all instances.
    pub max_tv: f64,
    /// Instances above the given total-variation bound.
    pub above_bound: usize,
    pub not_converged: usize,
}

/// Largest per-variable total-variation distance between two sets of
/// association marginals.
pub fn association_tv(a: &AssociationMarginals, b: &AssociationMarginals) -> f64 {
    let rows = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
        (0..x.nrows())
            .map(|r| 0.5 * (x.row(r) - y.row(r)).abs().sum())
            .fold(0.0, f64::max)
    };
    rows(&a.target, &b.target).max(rows(&a.measurement, &b.measurement))
}

/// Loopy BP against enumeration on random association problems with at
/// most three targets and three measurements. Association weights are
/// i.i.d. uniform.
pub fn association_check(instances: usize, base_seed: u64, tv_bound: f64) -> Result<AssociationReport> {
    let mut rng = seed::stream(base_seed, "oracle-assoc");
    let options = LbpOptions::default();
    let mut report = AssociationReport {
        instances,
        tree_instances: 0,
        max_tree_tv: 0.0,
        max_tv: 0.0,
        above_bound: 0,
        not_converged: 0,
    };
    for _ in 0..instances {
        let n_targets = rng.random_range(1..=3);
        let n_meas = rng.random_range(0..=3);
        let mut beta = DMatrix::zeros(n_targets, n_meas + 1);
        for i in 0..n_targets {
            beta[(i, 0)] = rng.random_range(0.05..1.0);
            for j in 1..=n_meas {
                beta[(i, j)] = rng.random_range(0.0..1.0);
            }
        }
        let new_weight = (0..n_meas).map(|_| rng.random_range(0.01..1.0)).collect();
        let problem = AssociationProblem::new(beta, new_weight)?;
        let outcome = loopy_bp(&problem, &options)?;
        let tv = association_tv(&outcome.marginals, &exact_association(&problem));
        if n_targets == 1 || n_meas <= 1 {
            report.tree_instances += 1;
            report.max_tree_tv = report.max_tree_tv.max(tv);
        }
        report.max_tv = report.max_tv.max(tv);
        if tv > tv_bound {
            report.above_bound += 1;
        }
        if !outcome.converged {
            report.not_converged += 1;
        }
    }
    Ok(report)
}

/// Outcome of [`gospa_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GospaReport {
    pub instances: usize,
    /// Instances where the assignment solver and enumeration disagree in
    /// any bit.
    pub mismatches: usize,
    pub max_abs_diff: f64,
}

/// GOSPA against enumeration on random sets of at most five points.
pub fn gospa_check(instances: usize, base_seed: u64, p: f64, c: f64, alpha: f64) -> Result<GospaReport> {
    let mut rng = seed::stream(base_seed, "oracle-gospa");
    let points = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vector2<f64>> {
        (0..rng.random_range(0..=5))
            .map(|_| Vector2::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)))
            .collect()
    };
    let mut report = GospaReport {
        instances,
        mismatches: 0,
        max_abs_diff: 0.0,
    };
    for _ in 0..instances {
        let truth = points(&mut rng);
        let estimate = points(&mut rng);
        let fast = gospa(&truth, &estimate, p, c, alpha)?.total;
        let slow = brute_force_gospa(&truth, &estimate, p, c, alpha);
        if fast != slow {
            report.mismatches += 1;
            report.max_abs_diff = report.max_abs_diff.max((fast - slow).abs());
        }
    }
    Ok(report)
}
