//! Poisson and Bernoulli random finite sets with Gaussian-mixture densities.
//!
//! Every set density carries an auxiliary label: 0 marks the Poisson
//! component of undetected landmarks, `i ≥ 1` marks Bernoulli `i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, LinearGaussian};
use crate::mixture::GaussianMixture;

/// Auxiliary variable attached to a set density.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Label(pub u32);

impl Label {
    pub const UNDETECTED: Label = Label(0);

    /// Label shifted by `offset`, failing if the result would be negative.
    pub fn shifted(self, offset: i64) -> Result<Label> {
        let value = i64::from(self.0) + offset;
        u32::try_from(value)
            .map(Label)
            .map_err(|_| Error::Label(format!("shifting {} by {offset} gives {value}", self.0)))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Poisson point process with a Gaussian-mixture intensity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoissonProcess {
    pub label: Label,
    pub intensity: GaussianMixture,
}

impl PoissonProcess {
    pub fn undetected(intensity: GaussianMixture) -> Self {
        Self {
            label: Label::UNDETECTED,
            intensity,
        }
    }

    /// Expected number of points.
    pub fn mass(&self) -> f64 {
        self.intensity.mass()
    }
}

/// Bernoulli set: empty with probability `1 - existence`, otherwise a
/// single point drawn from `density`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliComponent {
    pub existence: f64,
    pub density: GaussianMixture,
    pub label: Label,
}

impl BernoulliComponent {
    pub fn new(existence: f64, density: GaussianMixture, label: Label) -> Result<Self> {
        if !(0.0..=1.0).contains(&existence) {
            return Err(Error::Argument(format!("existence probability {existence}")));
        }
        if label == Label::UNDETECTED {
            return Err(Error::Label("Bernoulli components need a label of at least 1".into()));
        }
        Ok(Self {
            existence,
            density,
            label,
        })
    }

    pub fn gaussian(existence: f64, density: Gaussian, label: Label) -> Result<Self> {
        Self::new(existence, GaussianMixture::single(density), label)
    }
}

/// Poisson multi-Bernoulli map density.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PmbState {
    pub poisson: PoissonProcess,
    pub bernoullis: Vec<BernoulliComponent>,
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} = {p} is not a probability")))
    }
}

/// Propagate a Bernoulli through survival and an optional transition.
///
/// `None` means a static point (Dirac transition).
pub fn bernoulli_predict(
    b: &BernoulliComponent,
    p_survive: f64,
    motion: Option<&LinearGaussian>,
) -> Result<BernoulliComponent> {
    check_probability("survival probability", p_survive)?;
    let density = match motion {
        None => b.density.clone(),
        Some(motion) => {
            let mut out = b.density.clone();
            for c in &mut out.components {
                c.gaussian = motion.predict(&c.gaussian)?;
            }
            out
        }
    };
    Ok(BernoulliComponent {
        existence: b.existence * p_survive,
        density,
        label: b.label,
    })
}

/// Survival-thin the intensity, propagate it and superpose the birth intensity.
pub fn ppp_predict(
    p: &PoissonProcess,
    p_survive: f64,
    motion: Option<&LinearGaussian>,
    birth: &GaussianMixture,
) -> Result<PoissonProcess> {
    check_probability("survival probability", p_survive)?;
    let mut intensity = p.intensity.clone();
    intensity.scale_log(p_survive.ln());
    if let Some(motion) = motion {
        for c in &mut intensity.components {
            c.gaussian = motion.predict(&c.gaussian)?;
        }
    }
    intensity.components.extend(birth.components.iter().cloned());
    Ok(PoissonProcess {
        label: p.label,
        intensity,
    })
}

/// Multiply each intensity component by its expected missed-detection factor.
pub fn ppp_thin_by_miss(p: &PoissonProcess, miss_factors: &[f64]) -> Result<PoissonProcess> {
    if miss_factors.len() != p.intensity.len() {
        return Err(Error::Dimension {
            expected: p.intensity.len(),
            found: miss_factors.len(),
        });
    }
    let mut out = p.clone();
    for (c, &factor) in out.intensity.components.iter_mut().zip(miss_factors) {
        check_probability("miss factor", factor)?;
        c.log_weight += factor.ln();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn scalar_bernoulli(r: f64, mean: f64, var: f64) -> BernoulliComponent {
        BernoulliComponent::gaussian(r, Gaussian::isotropic(&[mean], var), Label(1)).unwrap()
    }

    #[test]
    fn bernoulli_survival_scales_existence() {
        let b = scalar_bernoulli(0.4, 0.0, 1.0);
        let out = bernoulli_predict(&b, 0.99, None).unwrap();
        assert_relative_eq!(out.existence, 0.396, epsilon = 1e-15);
        assert_eq!(out.density, b.density);
    }

    #[test]
    fn bernoulli_random_walk_prediction() {
        let b = scalar_bernoulli(1.0, 2.0, 1.0);
        let walk = LinearGaussian::new(DMatrix::identity(1, 1), DMatrix::from_element(1, 1, 0.01))
            .unwrap();
        let out = bernoulli_predict(&b, 0.9, Some(&walk)).unwrap();
        assert_relative_eq!(out.existence, 0.9, epsilon = 1e-15);
        let g = &out.density.components[0].gaussian;
        assert_relative_eq!(g.mean[0], 2.0, epsilon = 1e-15);
        assert_relative_eq!(g.cov[(0, 0)], 1.01, epsilon = 1e-15);
    }

    #[test]
    fn bernoulli_identity_prediction_is_exact() {
        let b = scalar_bernoulli(0.37, 1.5, 0.2);
        let identity =
            LinearGaussian::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(bernoulli_predict(&b, 1.0, Some(&identity)).unwrap(), b);
        assert_eq!(bernoulli_predict(&b, 1.0, None).unwrap(), b);
    }

    #[test]
    fn bernoulli_rejects_bad_probability() {
        let b = scalar_bernoulli(0.5, 0.0, 1.0);
        assert!(matches!(bernoulli_predict(&b, 1.2, None), Err(Error::Argument(_))));
    }

    #[test]
    fn ppp_prediction_adds_birth() {
        let mut intensity = GaussianMixture::new();
        intensity.push(1.0, Gaussian::isotropic(&[0.0, 0.0], 1.0)).unwrap();
        let mut birth = GaussianMixture::new();
        birth.push(1e-3, Gaussian::isotropic(&[0.0, 0.0], 1e6)).unwrap();
        let out = ppp_predict(&PoissonProcess::undetected(intensity), 0.99, None, &birth).unwrap();
        let weights: Vec<f64> = out.intensity.components.iter().map(|c| c.weight()).collect();
        assert_relative_eq!(weights[0], 0.99, epsilon = 1e-15);
        assert_relative_eq!(weights[1], 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn thinning_by_miss() {
        let mut intensity = GaussianMixture::new();
        intensity.push(2.0, Gaussian::isotropic(&[0.0, 0.0], 1.0)).unwrap();
        let out = ppp_thin_by_miss(&PoissonProcess::undetected(intensity.clone()), &[0.05]).unwrap();
        assert_relative_eq!(out.mass(), 0.1, epsilon = 1e-15);
        let err = ppp_thin_by_miss(&PoissonProcess::undetected(intensity), &[0.5, 0.5]).unwrap_err();
        assert_eq!(err, Error::Dimension { expected: 1, found: 2 });
    }

    #[test]
    fn label_shift_rejects_negative() {
        assert_eq!(Label(2).shifted(1).unwrap(), Label(3));
        assert!(matches!(Label(2).shifted(-3), Err(Error::Label(_))));
    }
}
