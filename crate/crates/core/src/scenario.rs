//! Ground-truth generator for a bistatic radio SLAM run: a sensor moving
//! along a corridor of scattering points, a base station, FoV-gated
//! landmark detections and uniform clutter.
//!
//! Measurements are two-dimensional. The base-station path gives
//! `z = x_s + r`; a scattering point gives `z = x_sp - x_s + r`. Clutter is
//! uniform over a region of measurement space whose area is
//! `clutter_mean / clutter_density`, so that the clutter intensity
//! integrates to the expected clutter count.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{ConstantVelocity, SensorState};
use crate::seed;

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    /// Square of the given area centered at the origin.
    pub fn centered_square(area: f64) -> Self {
        let half = 0.5 * area.sqrt();
        Self {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Vector2<f64> {
        Vector2::new(
            rng.random_range(self.x_min..=self.x_max),
            rng.random_range(self.y_min..=self.y_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Region holding the scattering points (m).
    pub area: Rect,
    pub n_landmarks: usize,
    pub bs_position: Vector2<f64>,
    /// Number of measurement scans `K`.
    pub horizon: usize,
    pub dt: f64,
    /// Acceleration noise standard deviation (m/s²).
    pub sigma_process: f64,
    /// Measurement noise standard deviation per axis (m).
    pub sigma_meas: f64,
    pub fov_radius: f64,
    pub p_detect: f64,
    pub clutter_mean: f64,
    /// Clutter intensity per unit area of measurement space (1/m²).
    pub clutter_density: f64,
    /// Clutter region in measurement space; defaults to a square centered
    /// on the sensor with area `clutter_mean / clutter_density`.
    #[serde(default)]
    pub clutter_region: Option<Rect>,
    /// First scan at which scattering points can be detected.
    pub landmark_visible_from: usize,
    /// True initial sensor state `[x, y, vx, vy]`.
    pub initial_state_mean: [f64; 4],
    /// Covariance of the filter's initial sensor prior, row-major.
    pub initial_cov: [[f64; 4]; 4],
    /// Variance of the prior-map positions released when a scattering
    /// point is first detected.
    pub birth_hint_variance: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area: Rect {
                x_min: 0.0,
                x_max: 30.0,
                y_min: -400.0,
                y_max: 470.0,
            },
            n_landmarks: 176,
            bs_position: Vector2::zeros(),
            horizon: 80,
            dt: 0.5,
            sigma_process: 0.1,
            sigma_meas: 0.707,
            fov_radius: 20.0,
            p_detect: 0.95,
            clutter_mean: 1.0,
            clutter_density: 1.6e-4,
            clutter_region: None,
            landmark_visible_from: 5,
            initial_state_mean: [15.0, -420.0, 0.0, 20.0],
            initial_cov: [
                [0.5, 0.0, 0.0, 0.0],
                [0.0, 0.5, 0.0, 0.0],
                [0.0, 0.0, 0.005, 0.0],
                [0.0, 0.0, 0.0, 0.005],
            ],
            birth_hint_variance: 0.01,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Reduced setup: 40 scattering points over `[0,30] × [-200,200]` and
    /// 40 scans, starting 20 m before the area like the full setup.
    pub fn desk() -> Self {
        Self {
            area: Rect {
                x_min: 0.0,
                x_max: 30.0,
                y_min: -200.0,
                y_max: 200.0,
            },
            n_landmarks: 40,
            horizon: 40,
            initial_state_mean: [15.0, -220.0, 0.0, 20.0],
            ..Self::default()
        }
    }

    pub fn motion(&self) -> ConstantVelocity {
        ConstantVelocity {
            dt: self.dt,
            accel_std: self.sigma_process,
        }
    }

    pub fn initial_cov_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.initial_cov[r][c])
    }

    /// Clutter region actually sampled.
    pub fn effective_clutter_region(&self) -> Option<Rect> {
        if self.clutter_mean == 0.0 {
            return None;
        }
        Some(
            self.clutter_region
                .unwrap_or_else(|| Rect::centered_square(self.clutter_mean / self.clutter_density)),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("sigma_meas", self.sigma_meas),
            ("fov_radius", self.fov_radius),
            ("birth_hint_variance", self.birth_hint_variance),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(Error::Input(format!("scenario.{name} must be positive (got {value})")));
            }
        }
        let non_negative = [
            ("sigma_process", self.sigma_process),
            ("clutter_mean", self.clutter_mean),
            ("clutter_density", self.clutter_density),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::Input(format!(
                    "scenario.{name} must be non-negative (got {value})"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.p_detect) {
            return Err(Error::Input(format!(
                "scenario.p_detect must be in [0, 1] (got {})",
                self.p_detect
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Input("scenario.horizon must be at least 1".into()));
        }
        if !(self.area.area() > 0.0) {
            return Err(Error::Input("scenario.area must have positive extent".into()));
        }
        if self.clutter_mean > 0.0 && self.clutter_region.is_none() && self.clutter_density == 0.0 {
            return Err(Error::Input(
                "scenario.clutter_density must be positive when clutter_mean > 0".into(),
            ));
        }
        if self.initial_cov_matrix().cholesky().is_none() {
            return Err(Error::Input("scenario.initial_cov must be positive definite".into()));
        }
        Ok(())
    }
}

/// Source of a measurement. Used for evaluation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    BaseStation,
    Landmark(usize),
    Clutter,
}

/// Measurements of one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub time_index: usize,
    pub measurements: Vec<Vector2<f64>>,
    pub origins: Vec<Origin>,
    /// Noisy prior-map positions of the points first detected at this step.
    pub birth_hints: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub landmarks: Vec<Vector2<f64>>,
    /// States `s_0 .. s_K`.
    pub trajectory: Vec<SensorState>,
    /// Accelerations `q_1 .. q_K` that generated the trajectory.
    pub accelerations: Vec<Vector2<f64>>,
    /// Scans `1 .. K`.
    pub scans: Vec<Scan>,
    /// Initial mean for the filter's sensor prior, drawn around the true state.
    pub prior_mean: Vector4<f64>,
}

fn gaussian2(rng: &mut impl Rng, std: f64) -> Vector2<f64> {
    Vector2::new(
        std * rng.sample::<f64, _>(StandardNormal),
        std * rng.sample::<f64, _>(StandardNormal),
    )
}

/// Sample a complete run.
pub fn generate(cfg: &ScenarioConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut landmark_rng = seed::stream(cfg.seed, "landmarks");
    let mut process_rng = seed::stream(cfg.seed, "process");
    let mut detection_rng = seed::stream(cfg.seed, "detection");
    let mut noise_rng = seed::stream(cfg.seed, "measurement");
    let mut clutter_rng = seed::stream(cfg.seed, "clutter");
    let mut shuffle_rng = seed::stream(cfg.seed, "shuffle");
    let mut hint_rng = seed::stream(cfg.seed, "birth-hints");
    let mut prior_rng = seed::stream(cfg.seed, "prior");

    let landmarks: Vec<Vector2<f64>> = (0..cfg.n_landmarks)
        .map(|_| cfg.area.sample(&mut landmark_rng))
        .collect();

    let motion = cfg.motion();
    let mut state = Vector4::from_row_slice(&cfg.initial_state_mean);
    let mut trajectory = vec![SensorState::from_vector(&state)];
    let mut accelerations = Vec::with_capacity(cfg.horizon);

    let clutter_region = cfg.effective_clutter_region();
    let clutter_count = if cfg.clutter_mean > 0.0 {
        Some(Poisson::new(cfg.clutter_mean).map_err(|e| Error::Input(e.to_string()))?)
    } else {
        None
    };
    let mut detected = vec![false; landmarks.len()];
    let mut scans = Vec::with_capacity(cfg.horizon);

    for k in 1..=cfg.horizon {
        let accel = gaussian2(&mut process_rng, cfg.sigma_process);
        state = motion.step(&state, &accel);
        accelerations.push(accel);
        let sensor = SensorState::from_vector(&state);
        trajectory.push(sensor);

        let mut tagged = vec![(
            sensor.position + gaussian2(&mut noise_rng, cfg.sigma_meas),
            Origin::BaseStation,
        )];
        let mut birth_hints = Vec::new();
        if k >= cfg.landmark_visible_from {
            for (id, landmark) in landmarks.iter().enumerate() {
                if (landmark - sensor.position).norm() > cfg.fov_radius {
                    continue;
                }
                if !detection_rng.random_bool(cfg.p_detect) {
                    continue;
                }
                let z = landmark - sensor.position + gaussian2(&mut noise_rng, cfg.sigma_meas);
                tagged.push((z, Origin::Landmark(id)));
                if !detected[id] {
                    detected[id] = true;
                    birth_hints.push(landmark + gaussian2(&mut hint_rng, cfg.birth_hint_variance.sqrt()));
                }
            }
        }
        if let (Some(count), Some(region)) = (&clutter_count, &clutter_region) {
            let n = count.sample(&mut clutter_rng) as usize;
            for _ in 0..n {
                tagged.push((region.sample(&mut clutter_rng), Origin::Clutter));
            }
        }
        tagged.shuffle(&mut shuffle_rng);
        let (measurements, origins) = tagged.into_iter().unzip();
        scans.push(Scan {
            time_index: k,
            measurements,
            origins,
            birth_hints,
        });
    }

    let chol = cfg
        .initial_cov_matrix()
        .cholesky()
        .ok_or_else(|| Error::Input("scenario.initial_cov must be positive definite".into()))?;
    let white = Vector4::from_fn(|_, _| prior_rng.sample::<f64, _>(StandardNormal));
    let prior_mean = Vector4::from_row_slice(&cfg.initial_state_mean) + chol.l() * white;

    Ok(GroundTruth {
        landmarks,
        trajectory,
        accelerations,
        scans,
        prior_mean,
    })
}

/// Split off the measurement closest to `reference` in the metric `gate_cov⁻¹`.
///
/// Ties go to the lowest index.
pub fn extract_bs_measurement(
    measurements: &[Vector2<f64>],
    reference: &Vector2<f64>,
    gate_cov: &Matrix2<f64>,
) -> Result<(Vector2<f64>, Vec<Vector2<f64>>)> {
    if measurements.is_empty() {
        return Err(Error::Input("cannot extract a base-station measurement from an empty set".into()));
    }
    let inverse = gate_cov
        .try_inverse()
        .ok_or(Error::Singular("gating covariance"))?;
    let mut best = 0;
    let mut best_distance = f64::INFINITY;
    for (i, z) in measurements.iter().enumerate() {
        let diff = z - reference;
        let distance = diff.dot(&(inverse * diff));
        if distance < best_distance {
            best = i;
            best_distance = distance;
        }
    }
    let mut rest = measurements.to_vec();
    let chosen = rest.remove(best);
    Ok((chosen, rest))
}
