//! Gaussian mixtures with log-domain weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;

/// `ln Σ exp(v)`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGaussian {
    pub log_weight: f64,
    pub gaussian: Gaussian,
}

impl WeightedGaussian {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// How a mixture is interpreted when it is reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureRole {
    /// Weights carry mass (a Poisson intensity); total mass is kept.
    Intensity,
    /// Weights are renormalized to one after reduction.
    Density,
}

/// Parameters for pruning, merging and capping a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceOptions {
    /// Components with weight below this are dropped.
    pub prune_threshold: f64,
    /// Squared Mahalanobis gate for merging into the heaviest component.
    pub merge_distance: f64,
    pub max_components: usize,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        Self {
            prune_threshold: 5e-10,
            merge_distance: 4.0,
            max_components: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<WeightedGaussian>,
}

impl GaussianMixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(gaussian: Gaussian) -> Self {
        Self {
            components: vec![WeightedGaussian {
                log_weight: 0.0,
                gaussian,
            }],
        }
    }

    pub fn push(&mut self, weight: f64, gaussian: Gaussian) -> Result<()> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::Argument(format!("mixture weight {weight}")));
        }
        if let Some(first) = self.components.first() {
            if first.gaussian.dim() != gaussian.dim() {
                return Err(Error::Dimension {
                    expected: first.gaussian.dim(),
                    found: gaussian.dim(),
                });
            }
        }
        self.components.push(WeightedGaussian {
            log_weight: weight.ln(),
            gaussian,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn log_mass(&self) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.log_weight))
    }

    pub fn mass(&self) -> f64 {
        self.log_mass().exp()
    }

    /// Multiply every weight by `exp(log_factor)`.
    pub fn scale_log(&mut self, log_factor: f64) {
        for c in &mut self.components {
            c.log_weight += log_factor;
        }
    }

    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        let log_mass = self.log_mass();
        if log_mass.is_finite() {
            out.scale_log(-log_mass);
        }
        out
    }

    /// Single Gaussian with the mixture's first two moments.
    pub fn moment_match(&self) -> Result<Gaussian> {
        moment_match(self.components.iter().map(|c| (c.log_weight, &c.gaussian)))
    }

    /// Prune, merge and cap the mixture.
    pub fn reduce(&self, options: &ReduceOptions, role: MixtureRole) -> Result<Self> {
        let log_threshold = options.prune_threshold.ln();
        let mut remaining: Vec<&WeightedGaussian> = self
            .components
            .iter()
            .filter(|c| c.log_weight >= log_threshold && c.log_weight > f64::NEG_INFINITY)
            .collect();
        remaining.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight));

        let mut merged = Vec::new();
        while let Some(anchor) = remaining.first().copied() {
            let chol = anchor.gaussian.cov.clone().cholesky();
            let (group, rest): (Vec<&WeightedGaussian>, Vec<&WeightedGaussian>) =
                remaining.iter().partition(|c| {
                    let diff = &c.gaussian.mean - &anchor.gaussian.mean;
                    if diff.iter().all(|v| *v == 0.0) {
                        return true;
                    }
                    match &chol {
                        Some(chol) => diff.dot(&chol.solve(&diff)) <= options.merge_distance,
                        None => false,
                    }
                });
            let log_weight = log_sum_exp(group.iter().map(|c| c.log_weight));
            let gaussian = if group.len() == 1 {
                group[0].gaussian.clone()
            } else {
                moment_match(group.iter().map(|c| (c.log_weight, &c.gaussian)))?
            };
            merged.push(WeightedGaussian {
                log_weight,
                gaussian,
            });
            remaining = rest;
        }

        merged.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight));
        merged.truncate(options.max_components);
        let mut out = Self { components: merged };
        if role == MixtureRole::Density {
            out = out.normalized();
        }
        Ok(out)
    }
}

/// Moment-match weighted Gaussians given as `(log_weight, gaussian)`.
pub fn moment_match<'a>(
    parts: impl IntoIterator<Item = (f64, &'a Gaussian)>,
) -> Result<Gaussian> {
    let parts: Vec<(f64, &Gaussian)> = parts.into_iter().collect();
    let log_total = log_sum_exp(parts.iter().map(|p| p.0));
    if !log_total.is_finite() {
        return Err(Error::Argument("moment matching of a massless mixture".into()));
    }
    let dim = parts[0].1.dim();
    let mut mean = DVector::zeros(dim);
    for (lw, g) in &parts {
        mean += &g.mean * (lw - log_total).exp();
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (lw, g) in &parts {
        let diff = &g.mean - &mean;
        cov += (&g.cov + &diff * diff.transpose()) * (lw - log_total).exp();
    }
    Ok(Gaussian {
        mean,
        cov: (&cov + cov.transpose()) * 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mixture(parts: &[(f64, f64)]) -> GaussianMixture {
        let mut m = GaussianMixture::new();
        for &(w, mu) in parts {
            m.push(w, Gaussian::isotropic(&[mu, 0.0], 1.0)).unwrap();
        }
        m
    }

    #[test]
    fn prune_drops_tiny_weights() {
        let m = mixture(&[(1e-12, 0.0), (0.5, 100.0)]);
        let options = ReduceOptions {
            prune_threshold: 5e-10,
            merge_distance: 4.0,
            max_components: 100,
        };
        let out = m.reduce(&options, MixtureRole::Intensity).unwrap();
        assert_eq!(out.len(), 1);
        assert_relative_eq!(out.components[0].weight(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn coincident_components_merge() {
        let m = mixture(&[(0.3, 1.0), (0.2, 1.0)]);
        let out = m
            .reduce(&ReduceOptions::default(), MixtureRole::Intensity)
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_relative_eq!(out.components[0].weight(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(out.components[0].gaussian.mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            out.components[0].gaussian.cov,
            DMatrix::identity(2, 2),
            epsilon = 1e-15
        );
    }

    #[test]
    fn cap_keeps_heaviest() {
        let m = mixture(&[(0.1, 0.0), (0.3, 50.0), (0.2, 100.0)]);
        let options = ReduceOptions {
            max_components: 2,
            ..ReduceOptions::default()
        };
        let out = m.reduce(&options, MixtureRole::Intensity).unwrap();
        let weights: Vec<f64> = out.components.iter().map(|c| c.weight()).collect();
        assert_relative_eq!(weights[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(weights[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn density_role_renormalizes() {
        let m = mixture(&[(0.1, 0.0), (0.3, 50.0)]);
        let out = m.reduce(&ReduceOptions::default(), MixtureRole::Density).unwrap();
        assert_relative_eq!(out.mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn moment_match_of_two_points() {
        let a = Gaussian::isotropic(&[-1.0], 0.0);
        let b = Gaussian::isotropic(&[1.0], 0.0);
        let g = moment_match([(0.5f64.ln(), &a), (0.5f64.ln(), &b)]).unwrap();
        assert_relative_eq!(g.mean[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(g.cov[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp([]), f64::NEG_INFINITY);
        assert_relative_eq!(log_sum_exp([-1000.0, -1000.0]), -1000.0 + 2f64.ln());
    }
}
