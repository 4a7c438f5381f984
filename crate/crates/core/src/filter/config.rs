use serde::{Deserialize, Serialize};

use crate::assoc::LbpOptions;
use crate::error::{Error, Result};
use crate::mixture::ReduceOptions;
use crate::motion::ConstantVelocity;

/// Map density family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapModel {
    /// Poisson process for undetected landmarks plus Bernoulli components.
    Pmb,
    /// Bernoulli components only; births enter as Bernoullis during prediction.
    Mb,
}

/// How newly appearing landmarks enter the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BirthModel {
    /// One tight component at each prior-map position released at this step.
    Informative {
        /// Poisson birth weight.
        weight: f64,
        variance: f64,
        /// Existence probability of a Bernoulli birth (MB model).
        mb_existence: f64,
    },
    /// One broad component per measurement, centered on the measured
    /// position relative to the predicted sensor mean.
    Uninformative {
        /// Poisson birth weight; also the Bernoulli existence under MB.
        weight: f64,
        variance: f64,
    },
}

impl BirthModel {
    pub fn informative() -> Self {
        BirthModel::Informative {
            weight: 1.0,
            variance: 0.01,
            mb_existence: 0.95,
        }
    }

    pub fn uninformative() -> Self {
        BirthModel::Uninformative {
            weight: 1e-3,
            variance: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub map_model: MapModel,
    /// Weight particles with the messages from newly detected landmarks.
    pub use_new_target_sensor_messages: bool,
    pub p_detect: f64,
    pub fov_radius: f64,
    pub p_survive: f64,
    /// Clutter intensity `c(z)` (1/m²).
    pub clutter_intensity: f64,
    /// Measurement noise standard deviation per axis (m).
    pub meas_std: f64,
    pub motion: ConstantVelocity,
    pub birth: BirthModel,
    pub particle_count: usize,
    /// Resample when the effective sample size drops below this fraction.
    pub ess_fraction: f64,
    /// Bernoullis above this existence probability are reported.
    pub detect_threshold: f64,
    /// Bernoullis below this existence probability are removed.
    pub bernoulli_prune_threshold: f64,
    /// Pruning, merging and capping of the Poisson intensity.
    pub poisson_reduce: ReduceOptions,
    /// The base-station measurement updates the sensor for scans before this index.
    pub bs_measurement_until: usize,
    /// Optional squared Mahalanobis gate on landmark-measurement pairs.
    #[serde(default)]
    pub gate: Option<f64>,
    pub lbp: LbpOptions,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            map_model: MapModel::Pmb,
            use_new_target_sensor_messages: true,
            p_detect: 0.95,
            fov_radius: 20.0,
            p_survive: 0.99,
            clutter_intensity: 1.6e-4,
            meas_std: 0.707,
            motion: ConstantVelocity::default(),
            birth: BirthModel::informative(),
            particle_count: 10_000,
            ess_fraction: 0.5,
            detect_threshold: 0.4,
            bernoulli_prune_threshold: 1e-5,
            poisson_reduce: ReduceOptions {
                prune_threshold: 5e-10,
                merge_distance: 4.0,
                max_components: 100,
            },
            bs_measurement_until: 5,
            gate: None,
            lbp: LbpOptions::default(),
        }
    }
}

fn probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Input(format!("filter.{name} must be in [0, 1] (got {value})")))
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("filter.{name} must be positive (got {value})")))
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        probability("p_detect", self.p_detect)?;
        probability("p_survive", self.p_survive)?;
        probability("ess_fraction", self.ess_fraction)?;
        probability("detect_threshold", self.detect_threshold)?;
        probability("bernoulli_prune_threshold", self.bernoulli_prune_threshold)?;
        positive("fov_radius", self.fov_radius)?;
        positive("meas_std", self.meas_std)?;
        if !(self.clutter_intensity >= 0.0) || !self.clutter_intensity.is_finite() {
            return Err(Error::Input(format!(
                "filter.clutter_intensity must be non-negative (got {})",
                self.clutter_intensity
            )));
        }
        self.motion
            .validate()
            .map_err(|e| Error::Input(format!("filter.motion: {e}")))?;
        if self.particle_count == 0 {
            return Err(Error::Input("filter.particle_count must be at least 1".into()));
        }
        match self.birth {
            BirthModel::Informative {
                weight,
                variance,
                mb_existence,
            } => {
                positive("birth.weight", weight)?;
                positive("birth.variance", variance)?;
                probability("birth.mb_existence", mb_existence)?;
            }
            BirthModel::Uninformative { weight, variance } => {
                positive("birth.weight", weight)?;
                positive("birth.variance", variance)?;
                if self.map_model == MapModel::Mb {
                    probability("birth.weight", weight)?;
                }
            }
        }
        if !(self.lbp.tolerance >= 0.0) || !(0.0..1.0).contains(&self.lbp.damping) {
            return Err(Error::Input("filter.lbp: tolerance >= 0 and damping in [0, 1) required".into()));
        }
        if let Some(gate) = self.gate {
            positive("gate", gate)?;
        }
        Ok(())
    }
}
