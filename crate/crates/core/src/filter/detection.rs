use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

/// Precomputed 2-D normal density.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Normal2 {
    pub mean: Vector2<f64>,
    pub inverse: Matrix2<f64>,
    pub log_norm: f64,
}

impl Normal2 {
    pub fn new(mean: Vector2<f64>, cov: &Matrix2<f64>) -> Option<Self> {
        let det = cov.determinant();
        if !(det > 0.0) {
            return None;
        }
        Some(Self {
            mean,
            inverse: cov.try_inverse()?,
            log_norm: -(2.0 * PI).ln() - 0.5 * det.ln(),
        })
    }

    pub fn log_pdf(&self, x: &Vector2<f64>) -> f64 {
        let d = x - self.mean;
        self.log_norm - 0.5 * d.dot(&(self.inverse * d))
    }
}

/// Detection probability `p_D` inside a disk around the sensor and zero
/// outside.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FieldOfView {
    pub p_detect: f64,
    pub radius: f64,
}

const RINGS: usize = 12;
const SECTORS: usize = 24;

fn eigen_range(cov: &Matrix2<f64>) -> (f64, f64) {
    let half_trace = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
    let spread = (0.25 * (cov[(0, 0)] - cov[(1, 1)]).powi(2) + cov[(0, 1)].powi(2)).sqrt();
    ((half_trace - spread).max(0.0), half_trace + spread)
}

impl FieldOfView {
    pub fn at_point(&self, sensor: &Vector2<f64>, x: &Vector2<f64>) -> f64 {
        if (x - sensor).norm() <= self.radius {
            self.p_detect
        } else {
            0.0
        }
    }

    /// `E[p_D(sensor, x)]` for `x ~ N(mean, cov)`.
    ///
    /// Narrow densities use the point value at the mean, very broad ones the
    /// density at the sensor times the disk area; anything in between is
    /// integrated on a polar grid.
    pub fn expected(&self, sensor: &Vector2<f64>, mean: &Vector2<f64>, cov: &Matrix2<f64>) -> f64 {
        if self.p_detect == 0.0 {
            return 0.0;
        }
        let (low, high) = eigen_range(cov);
        if high.sqrt() <= 0.05 * self.radius {
            return self.at_point(sensor, mean);
        }
        let Some(normal) = Normal2::new(*mean, cov) else {
            return self.at_point(sensor, mean);
        };
        let disk = PI * self.radius * self.radius;
        if low.sqrt() >= 5.0 * self.radius {
            return (self.p_detect * disk * normal.log_pdf(sensor).exp()).min(self.p_detect);
        }
        let cell = disk / (RINGS * SECTORS) as f64;
        let mut mass = 0.0;
        for ring in 0..RINGS {
            let rho = self.radius * ((ring as f64 + 0.5) / RINGS as f64).sqrt();
            for sector in 0..SECTORS {
                let angle = 2.0 * PI * (sector as f64 + 0.5) / SECTORS as f64;
                let x = sensor + Vector2::new(rho * angle.cos(), rho * angle.sin());
                mass += normal.log_pdf(&x).exp();
            }
        }
        (self.p_detect * mass * cell).min(self.p_detect)
    }
}
