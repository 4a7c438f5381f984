//! Closed forms of the partition/merge and label-shift factors for
//! Poisson and Bernoulli set densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::rfs::{BernoulliComponent, Label, PoissonProcess};

/// A labeled set density travelling along an edge of the factor graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabeledDensity {
    Poisson(PoissonProcess),
    Bernoulli(BernoulliComponent),
}

impl LabeledDensity {
    pub fn label(&self) -> Label {
        match self {
            LabeledDensity::Poisson(p) => p.label,
            LabeledDensity::Bernoulli(b) => b.label,
        }
    }
}

/// Message out of a merge factor whose inputs are Poisson processes.
///
/// The disjoint union of independent Poisson processes is Poisson with the
/// summed intensity.
pub fn merge_ppps(inputs: &[PoissonProcess]) -> Result<PoissonProcess> {
    let mut intensity = GaussianMixture::new();
    for (index, p) in inputs.iter().enumerate() {
        if p.label != Label::UNDETECTED {
            return Err(Error::Label(format!(
                "merge input {index} carries label {} instead of 0",
                p.label
            )));
        }
        intensity.components.extend(p.intensity.components.iter().cloned());
    }
    Ok(PoissonProcess::undetected(intensity))
}

/// Messages out of a partition factor fed by a Poisson process.
///
/// Each of the `n` outputs is the input process itself.
pub fn partition_ppp(input: &PoissonProcess, n: usize) -> Result<Vec<PoissonProcess>> {
    if n < 1 {
        return Err(Error::Argument("partition needs at least one output".into()));
    }
    Ok(vec![input.clone(); n])
}

/// Message out of the label-conversion factor `(u, x) -> (u + offset, x)`.
pub fn shift_label(density: &LabeledDensity, offset: i64) -> Result<LabeledDensity> {
    Ok(match density {
        LabeledDensity::Poisson(p) => LabeledDensity::Poisson(PoissonProcess {
            label: p.label.shifted(offset)?,
            intensity: p.intensity.clone(),
        }),
        LabeledDensity::Bernoulli(b) => LabeledDensity::Bernoulli(BernoulliComponent {
            existence: b.existence,
            density: b.density.clone(),
            label: b.label.shifted(offset)?,
        }),
    })
}
