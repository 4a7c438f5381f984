//! Planar constant-velocity sensor motion driven by white acceleration.

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensor position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
}

impl SensorState {
    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            position: Vector2::new(v[0], v[1]),
            velocity: Vector2::new(v[2], v[3]),
        }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
        )
    }
}

/// `s_k = F s_{k-1} + B q_k` with `q_k ~ N(0, accel_std² I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantVelocity {
    /// Sampling interval (s).
    pub dt: f64,
    /// Acceleration noise standard deviation (m/s²).
    pub accel_std: f64,
}

impl Default for ConstantVelocity {
    fn default() -> Self {
        Self {
            dt: 0.5,
            accel_std: 0.1,
        }
    }
}

impl ConstantVelocity {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.accel_std >= 0.0) {
            return Err(Error::Input(format!(
                "motion needs dt > 0 and accel_std >= 0 (got {}, {})",
                self.dt, self.accel_std
            )));
        }
        Ok(())
    }

    pub fn transition(&self) -> Matrix4<f64> {
        let mut f = Matrix4::identity();
        f[(0, 2)] = self.dt;
        f[(1, 3)] = self.dt;
        f
    }

    pub fn input(&self) -> Matrix4x2<f64> {
        let half_sq = 0.5 * self.dt * self.dt;
        Matrix4x2::new(half_sq, 0.0, 0.0, half_sq, self.dt, 0.0, 0.0, self.dt)
    }

    /// Covariance of the driving noise in state space, `accel_std² B Bᵀ`.
    pub fn noise_cov(&self) -> Matrix4<f64> {
        let b = self.input();
        b * (Matrix2::identity() * self.accel_std.powi(2)) * b.transpose()
    }

    /// Propagate a state with a given acceleration sample.
    pub fn step(&self, state: &Vector4<f64>, accel: &Vector2<f64>) -> Vector4<f64> {
        self.transition() * state + self.input() * accel
    }
}
