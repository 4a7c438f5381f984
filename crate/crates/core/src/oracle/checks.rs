//! Randomized self-checks of the set-BP engine against enumeration.

use rand::Rng;

use super::{exact_marginals, run_set_bp, DiscreteFactorGraph, Schedule, SetDomain};
use crate::error::Result;
use crate::seed;

/// Random cycle-free factor graph.
///
/// Every variable gets a random unary factor. Each further variable is
/// attached to one existing variable through a pairwise factor, or two new
/// variables are attached together through a ternary one.
pub fn random_tree_graph(
    rng: &mut impl Rng,
    max_vars: usize,
    max_space: usize,
    max_cap: usize,
) -> Result<DiscreteFactorGraph> {
    let n_vars = rng.random_range(1..=max_vars.max(1));
    let mut g = DiscreteFactorGraph::new();
    for _ in 0..n_vars {
        let space = rng.random_range(1..=max_space.max(1));
        let cap = rng.random_range(1..=max_cap.max(1)).min(space);
        g.add_variable(SetDomain::new(space, cap)?);
    }
    let table = |rng: &mut dyn rand::RngCore, size: usize| -> Vec<f64> {
        (0..size).map(|_| rng.random_range(0.05..1.0)).collect()
    };
    for v in 0..n_vars {
        let values = table(rng, g.domains[v].len());
        let domain = g.domains[v].clone();
        g.add_factor(&[v], |m| values[domain.index(m[0]).expect("admissible")])?;
    }
    let mut next = 1;
    while next < n_vars {
        let anchor = rng.random_range(0..next);
        let vars: Vec<usize> = if next + 1 < n_vars && rng.random_bool(0.3) {
            vec![anchor, next, next + 1]
        } else {
            vec![anchor, next]
        };
        next += vars.len() - 1;
        let sizes: Vec<usize> = vars.iter().map(|&v| g.domains[v].len()).collect();
        let values = table(rng, sizes.iter().product());
        let domains: Vec<SetDomain> = vars.iter().map(|&v| g.domains[v].clone()).collect();
        g.add_factor(&vars, |m| {
            let mut flat = 0;
            for (k, d) in domains.iter().enumerate() {
                flat = flat * d.len() + d.index(m[k]).expect("admissible");
            }
            values[flat]
        })?;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactnessReport {
    pub graphs: usize,
    /// Largest absolute belief error over all graphs, subsets and schedules.
    pub max_error: f64,
    /// Largest belief change caused by one extra sweep after convergence.
    pub max_fixed_point_drift: f64,
}

/// Compare BP beliefs with enumeration on `graphs` random trees with at
/// most four variables, spaces of size three and cardinality cap two.
pub fn tree_exactness(graphs: usize, base_seed: u64) -> Result<ExactnessReport> {
    let mut rng = seed::stream(base_seed, "oracle-trees");
    let mut max_error: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    for _ in 0..graphs {
        let g = random_tree_graph(&mut rng, 4, 3, 2)?;
        let exact = exact_marginals(&g)?;
        let sweep = run_set_bp(&g, Schedule::TreeSweep, 1)?;
        let flood = run_set_bp(&g, Schedule::Flooding, g.domains.len() + g.factors.len())?;
        let again = run_set_bp(&g, Schedule::TreeSweep, 2)?;
        for v in 0..g.domains.len() {
            max_error = max_error
                .max(exact[v].max_abs_diff(&sweep.beliefs[v]))
                .max(exact[v].max_abs_diff(&flood.beliefs[v]));
            max_drift = max_drift.max(sweep.beliefs[v].max_abs_diff(&again.beliefs[v]));
        }
    }
    Ok(ExactnessReport {
        graphs,
        max_error,
        max_fixed_point_drift: max_drift,
    })
}
