//! Set-type belief propagation for simultaneous localization and mapping
//! with Poisson multi-Bernoulli map densities.
//!
//! The sensor state is tracked with a particle filter; landmarks are carried
//! as a Poisson process of undetected landmarks plus labeled Bernoulli
//! components, updated with Gaussian closed forms. Data association runs
//! loopy BP between the landmark-to-measurement and measurement-to-landmark
//! association variables.

pub mod assoc;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod metrics;
pub mod mixture;
pub mod motion;
pub mod oracle;
pub mod rfs;
pub mod scenario;
pub mod seed;
pub mod set_factors;
#[cfg(any(test, feature = "oracles"))]
pub mod testing;

pub use error::{Error, Result};
