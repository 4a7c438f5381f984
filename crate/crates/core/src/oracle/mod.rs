//! Set-type belief propagation on finite state spaces.
//!
//! Sets are subsets of `{0, .., n-1}` with at most `cap` elements, stored as
//! bitmasks. Without repeated elements a set integral over such a space is a
//! plain sum over subsets, so every message is a finite table and the exact
//! marginals can be found by enumeration.

mod bp;
pub mod checks;
mod graph;

pub use bp::{run_set_bp, BpOutcome, Schedule};
pub use graph::{exact_marginals, DiscreteFactor, DiscreteFactorGraph, DiscreteSetDensity, SetDomain};

/// Largest joint state space `exact_marginals` will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;
