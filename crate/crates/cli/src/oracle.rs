//! Oracle self-checks of the set-BP engine, the association solver, the
//! Poisson factor algebra and GOSPA, at their acceptance sizes.

use std::time::Instant;

use setbp::oracle::checks::tree_exactness;
use setbp::testing::{association_check, gospa_check, ppp_algebra_check};

use crate::error::Result;
use crate::evaluate::{GOSPA_ALPHA, GOSPA_C, GOSPA_P};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {} ({:.2} s): {}", self.name, self.seconds, self.detail)
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let value = f()?;
    Ok((value, start.elapsed().as_secs_f64()))
}

/// Enumeration comparison on 50 random tree graphs.
pub fn tree_check(seed: u64) -> Result<CheckOutcome> {
    let (report, seconds) = timed(|| Ok(tree_exactness(50, seed)?))?;
    Ok(CheckOutcome {
        name: "tree exactness",
        passed: report.max_error <= 1e-10 && seconds < 10.0,
        detail: format!("{} graphs, max belief error {:.3e}", report.graphs, report.max_error),
        seconds,
    })
}

/// Merge and partition closed forms on 100 random intensities.
pub fn ppp_check(seed: u64) -> Result<CheckOutcome> {
    let (report, seconds) = timed(|| Ok(ppp_algebra_check(100, seed)?))?;
    Ok(CheckOutcome {
        name: "poisson factor algebra",
        passed: report.parameter_mismatches == 0 && report.max_mass_error <= 1e-12 && seconds < 1.0,
        detail: format!(
            "{} instances, {} parameter mismatches, max relative mass error {:.3e}",
            report.instances, report.parameter_mismatches, report.max_mass_error
        ),
        seconds,
    })
}

/// Loopy BP against enumeration on 200 random problems with at most three
/// targets and measurements.
pub fn association_oracle(seed: u64) -> Result<CheckOutcome> {
    let bound = 0.05;
    let (report, seconds) = timed(|| Ok(association_check(200, seed, bound)?))?;
    Ok(CheckOutcome {
        name: "association marginals",
        passed: report.max_tree_tv <= 1e-9 && report.above_bound == 0 && seconds < 30.0,
        detail: format!(
            "{} instances ({} cycle-free, max TV {:.3e}); all instances max TV {:.4}, {} above {bound}, {} not converged",
            report.instances,
            report.tree_instances,
            report.max_tree_tv,
            report.max_tv,
            report.above_bound,
            report.not_converged
        ),
        seconds,
    })
}

/// Assignment-based GOSPA against enumeration on 500 random set pairs.
pub fn gospa_oracle(seed: u64) -> Result<CheckOutcome> {
    let (report, seconds) = timed(|| Ok(gospa_check(500, seed, GOSPA_P, GOSPA_C, GOSPA_ALPHA)?))?;
    Ok(CheckOutcome {
        name: "gospa assignment",
        passed: report.mismatches == 0 && seconds < 10.0,
        detail: format!(
            "{} instances, {} differing from enumeration (max diff {:.3e})",
            report.instances, report.mismatches, report.max_abs_diff
        ),
        seconds,
    })
}

pub fn all_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        tree_check(seed)?,
        ppp_check(seed)?,
        association_oracle(seed)?,
        gospa_oracle(seed)?,
    ])
}
