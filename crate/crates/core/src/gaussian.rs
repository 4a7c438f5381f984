//! Gaussian densities and the linear-Gaussian measurement update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Multivariate normal density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite Gaussian parameter".into()));
        }
        Ok(Self { mean, cov })
    }

    /// Isotropic Gaussian `N(mean, variance * I)`.
    pub fn isotropic(mean: &[f64], variance: f64) -> Self {
        let dim = mean.len();
        Self {
            mean: DVector::from_column_slice(mean),
            cov: DMatrix::identity(dim, dim) * variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        log_normal_pdf(x, &self.mean, &self.cov)
    }
}

/// `log N(x; mean, cov)`.
pub fn log_normal_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let dim = mean.len();
    if x.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: x.len(),
        });
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::Singular("normal density covariance"))?;
    let diff = x - mean;
    let solved = chol.solve(&diff);
    let quad = diff.dot(&solved);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (dim as f64 * LN_2PI + log_det + quad))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Kalman update of `prior` with measurement `z = H x + noise(R)`.
///
/// Returns the posterior and `log N(z; H m, H P Hᵀ + R)`. The posterior
/// covariance uses the Joseph form.
pub fn gaussian_update(
    prior: &Gaussian,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<(Gaussian, f64)> {
    let dim = prior.dim();
    if h.ncols() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: h.ncols(),
        });
    }
    let meas_dim = h.nrows();
    if z.len() != meas_dim || r.nrows() != meas_dim || r.ncols() != meas_dim {
        return Err(Error::Dimension {
            expected: meas_dim,
            found: z.len(),
        });
    }
    let predicted = h * &prior.mean;
    let innovation_cov = symmetrize(&(h * &prior.cov * h.transpose() + r));
    let chol = innovation_cov
        .clone()
        .cholesky()
        .ok_or(Error::Singular("innovation covariance"))?;
    // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ.
    let gain = chol.solve(&(h * &prior.cov)).transpose();
    let mean = &prior.mean + &gain * (z - &predicted);
    let i_kh = DMatrix::identity(dim, dim) - &gain * h;
    let cov = &i_kh * &prior.cov * i_kh.transpose() + &gain * r * gain.transpose();
    let log_evidence = log_normal_pdf(z, &predicted, &innovation_cov)?;
    Ok((
        Gaussian {
            mean,
            cov: symmetrize(&cov),
        },
        log_evidence,
    ))
}

/// Linear-Gaussian transition `x' = F x + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussian {
    pub transition: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
}

impl LinearGaussian {
    pub fn new(transition: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        if !transition.is_square() || noise_cov.shape() != transition.shape() {
            return Err(Error::Dimension {
                expected: transition.nrows(),
                found: noise_cov.nrows(),
            });
        }
        Ok(Self {
            transition,
            noise_cov,
        })
    }

    pub fn predict(&self, g: &Gaussian) -> Result<Gaussian> {
        if g.dim() != self.transition.ncols() {
            return Err(Error::Dimension {
                expected: self.transition.ncols(),
                found: g.dim(),
            });
        }
        Ok(Gaussian {
            mean: &self.transition * &g.mean,
            cov: symmetrize(&(&self.transition * &g.cov * self.transition.transpose() + &self.noise_cov)),
        })
    }
}
