//! Rao-Blackwellized SLAM filter: a particle belief over the sensor state
//! and a Poisson multi-Bernoulli (or multi-Bernoulli) landmark map.
//!
//! Each scan runs one pass of set-type BP over the prediction and update
//! factor graph:
//!
//! 1. Prediction moves the particles with the constant-velocity model,
//!    survival-thins the landmark densities (landmarks are static) and
//!    merges in the birth intensity.
//! 2. The predicted Poisson process is partitioned into the still
//!    undetected part and one copy per measurement; each copy is relabeled
//!    to the label of the Bernoulli it may become.
//! 3. Association weights are averaged over the predicted particles and
//!    loopy BP yields the association messages.
//! 4. Landmark densities are updated with particle-averaged Kalman
//!    posteriors, moment-matched to a single Gaussian.
//! 5. Particles are reweighted with the messages from the previously
//!    detected landmarks, from the newly detected ones (optional, disabled
//!    for the baseline) and from the undetected Poisson part.

mod config;
mod detection;
mod particles;
mod update;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use config::{BirthModel, FilterConfig, MapModel};
pub use particles::{resample, systematic_counts, ParticleBelief};
pub use update::update;

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::mixture::GaussianMixture;
use crate::motion::SensorState;
use crate::rfs::{bernoulli_predict, ppp_predict, BernoulliComponent, Label, PmbState, PoissonProcess};
use crate::scenario::extract_bs_measurement;
use crate::set_factors::merge_ppps;

/// Joint sensor and map posterior after a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamPosterior {
    pub sensor: ParticleBelief,
    pub map: PmbState,
    pub time_index: usize,
    /// Highest Bernoulli label issued so far.
    pub last_label: u32,
}

/// Per-scan diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Effective sample size after reweighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    pub n_bernoulli: usize,
    pub ppp_mass: f64,
    pub assoc_iterations: usize,
    pub assoc_converged: bool,
}

/// Point estimates reported after a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamEstimate {
    pub sensor: SensorState,
    pub landmarks: Vec<Vector2<f64>>,
    pub labels: Vec<Label>,
}

/// Birth inputs available at a scan.
#[derive(Debug, Clone, Copy)]
pub struct BirthInput<'a> {
    /// Prior-map positions released at this scan.
    pub hints: &'a [Vector2<f64>],
    /// Landmark measurements of this scan.
    pub measurements: &'a [Vector2<f64>],
}

pub(crate) fn to_fixed(g: &Gaussian) -> (Vector2<f64>, Matrix2<f64>) {
    (
        Vector2::new(g.mean[0], g.mean[1]),
        Matrix2::new(g.cov[(0, 0)], g.cov[(0, 1)], g.cov[(1, 0)], g.cov[(1, 1)]),
    )
}

pub(crate) fn from_fixed(mean: &Vector2<f64>, cov: &Matrix2<f64>) -> Gaussian {
    let sym = (cov + cov.transpose()) * 0.5;
    Gaussian {
        mean: DVector::from_column_slice(mean.as_slice()),
        cov: DMatrix::from_column_slice(2, 2, sym.as_slice()),
    }
}

impl SlamPosterior {
    /// Particles drawn from `N(prior_mean, prior_cov)` and an empty map.
    pub fn initial(
        prior_mean: &Vector4<f64>,
        prior_cov: &Matrix4<f64>,
        cfg: &FilterConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let chol = prior_cov
            .cholesky()
            .ok_or(Error::Singular("initial sensor covariance"))?;
        let states = (0..cfg.particle_count)
            .map(|_| {
                let white = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                prior_mean + chol.l() * white
            })
            .collect();
        Ok(Self {
            sensor: ParticleBelief::uniform(states),
            map: PmbState::default(),
            time_index: 0,
            last_label: 0,
        })
    }

    pub fn estimate(&self, cfg: &FilterConfig) -> Result<SlamEstimate> {
        extract_estimates(self, cfg.detect_threshold)
    }
}

/// Weighted mean sensor state and the means of Bernoullis whose existence
/// exceeds `threshold`.
pub fn extract_estimates(post: &SlamPosterior, threshold: f64) -> Result<SlamEstimate> {
    let mut landmarks = Vec::new();
    let mut labels = Vec::new();
    for b in &post.map.bernoullis {
        if b.existence > threshold {
            let g = b.density.moment_match()?;
            landmarks.push(Vector2::new(g.mean[0], g.mean[1]));
            labels.push(b.label);
        }
    }
    Ok(SlamEstimate {
        sensor: post.sensor.mean_state(),
        landmarks,
        labels,
    })
}

/// Birth components for one scan under the configured model.
fn birth_components(cfg: &FilterConfig, input: &BirthInput, sensor_mean: &Vector2<f64>) -> Vec<(f64, Gaussian)> {
    match cfg.birth {
        BirthModel::Informative {
            weight,
            variance,
            mb_existence,
        } => {
            let w = match cfg.map_model {
                MapModel::Pmb => weight,
                MapModel::Mb => mb_existence,
            };
            input
                .hints
                .iter()
                .map(|h| (w, Gaussian::isotropic(h.as_slice(), variance)))
                .collect()
        }
        BirthModel::Uninformative { weight, variance } => input
            .measurements
            .iter()
            .map(|z| {
                let center = sensor_mean + z;
                (weight, Gaussian::isotropic(center.as_slice(), variance))
            })
            .collect(),
    }
}

/// Prediction to the next scan.
pub fn predict(
    prev: &SlamPosterior,
    cfg: &FilterConfig,
    birth: &BirthInput,
    rng: &mut impl Rng,
) -> Result<SlamPosterior> {
    let motion = &cfg.motion;
    let transition = motion.transition();
    let input = motion.input();
    let states: Vec<Vector4<f64>> = prev
        .sensor
        .states
        .iter()
        .map(|s| {
            let accel = Vector2::new(
                motion.accel_std * rng.sample::<f64, _>(StandardNormal),
                motion.accel_std * rng.sample::<f64, _>(StandardNormal),
            );
            transition * s + input * accel
        })
        .collect();
    let sensor = ParticleBelief {
        states,
        log_weights: prev.sensor.log_weights.clone(),
    };
    let sensor_mean = sensor.mean_position();
    let births = birth_components(cfg, birth, &sensor_mean);

    let mut last_label = prev.last_label;
    let mut bernoullis = prev
        .map
        .bernoullis
        .iter()
        .map(|b| bernoulli_predict(b, cfg.p_survive, None))
        .collect::<Result<Vec<_>>>()?;
    let poisson = match cfg.map_model {
        MapModel::Pmb => {
            let survived = ppp_predict(&prev.map.poisson, cfg.p_survive, None, &GaussianMixture::new())?;
            let mut birth_intensity = GaussianMixture::new();
            for (w, g) in births {
                birth_intensity.push(w, g)?;
            }
            merge_ppps(&[survived, PoissonProcess::undetected(birth_intensity)])?
        }
        MapModel::Mb => {
            for (r, g) in births {
                last_label += 1;
                bernoullis.push(BernoulliComponent::gaussian(r, g, Label(last_label))?);
            }
            PoissonProcess::default()
        }
    };
    Ok(SlamPosterior {
        sensor,
        map: PmbState {
            poisson,
            bernoullis,
        },
        time_index: prev.time_index + 1,
        last_label,
    })
}

/// Split the base-station measurement from a scan, gated around the
/// predicted sensor position.
pub fn split_bs_measurement(
    prev: &SlamPosterior,
    measurements: &[Vector2<f64>],
    cfg: &FilterConfig,
) -> Result<(Option<Vector2<f64>>, Vec<Vector2<f64>>)> {
    if measurements.is_empty() {
        return Ok((None, Vec::new()));
    }
    let predicted = cfg.motion.transition() * prev.sensor.mean();
    let reference = Vector2::new(predicted[0], predicted[1]);
    let r = Matrix2::identity() * cfg.meas_std.powi(2);
    let (bs, rest) = extract_bs_measurement(measurements, &reference, &r)?;
    Ok((Some(bs), rest))
}

/// Predict and update with one scan. The scan holds the base-station
/// measurement plus landmark measurements and clutter.
pub fn step(
    prev: &SlamPosterior,
    scan: &[Vector2<f64>],
    birth_hints: &[Vector2<f64>],
    cfg: &FilterConfig,
    rng: &mut impl Rng,
) -> Result<(SlamPosterior, StepDiagnostics)> {
    let (bs, measurements) = split_bs_measurement(prev, scan, cfg)?;
    let birth = BirthInput {
        hints: birth_hints,
        measurements: &measurements,
    };
    let predicted = predict(prev, cfg, &birth, rng)?;
    let bs = bs.filter(|_| predicted.time_index < cfg.bs_measurement_until);
    update(&predicted, &measurements, bs.as_ref(), cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::log_sum_exp;
    use crate::seed::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn single_particle(position: [f64; 2]) -> ParticleBelief {
        ParticleBelief::uniform(vec![Vector4::new(position[0], position[1], 0.0, 0.0)])
    }

    fn posterior(sensor: ParticleBelief, map: PmbState, last_label: u32) -> SlamPosterior {
        SlamPosterior {
            sensor,
            map,
            time_index: 1,
            last_label,
        }
    }

    fn wide_fov() -> FilterConfig {
        FilterConfig {
            p_detect: 1.0,
            fov_radius: 1e6,
            ..FilterConfig::default()
        }
    }

    #[test]
    fn vacuous_update_returns_prediction() {
        let cfg = FilterConfig {
            p_detect: 0.0,
            ..FilterConfig::default()
        };
        let mut poisson = GaussianMixture::new();
        poisson.push(0.3, Gaussian::isotropic(&[1.0, 2.0], 4.0)).unwrap();
        let map = PmbState {
            poisson: PoissonProcess::undetected(poisson),
            bernoullis: vec![BernoulliComponent::gaussian(0.7, Gaussian::isotropic(&[5.0, 5.0], 1.0), Label(3)).unwrap()],
        };
        let states = (0..5).map(|i| Vector4::new(i as f64, 0.0, 1.0, 0.0)).collect();
        let pred = posterior(ParticleBelief::uniform(states), map, 3);
        let (post, diag) = update(&pred, &[], None, &cfg, &mut stream(1, "t")).unwrap();
        assert_eq!(post.map, pred.map);
        assert_eq!(post.sensor.states, pred.sensor.states);
        for (a, b) in post.sensor.log_weights.iter().zip(&pred.sensor.log_weights) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        assert!(!diag.resampled);
    }

    #[test]
    fn new_bernoulli_existence_from_evidence_ratio() {
        // One tight Poisson component exactly at the measured position, with
        // weight chosen so the detection evidence is 0.01.
        let cfg = wide_fov();
        let r_var = cfg.meas_std.powi(2);
        let u_var = 0.01;
        let evidence = 0.01;
        let eta = evidence * 2.0 * PI * (u_var + r_var);
        let mut intensity = GaussianMixture::new();
        intensity.push(eta, Gaussian::isotropic(&[3.0, 4.0], u_var)).unwrap();
        let map = PmbState {
            poisson: PoissonProcess::undetected(intensity),
            bernoullis: Vec::new(),
        };
        let pred = posterior(single_particle([0.0, 0.0]), map, 0);
        let (post, _) = update(&pred, &[Vector2::new(3.0, 4.0)], None, &cfg, &mut stream(2, "t")).unwrap();
        assert_eq!(post.map.bernoullis.len(), 1);
        let oracle = evidence / (evidence + 1.6e-4);
        assert_relative_eq!(oracle, 0.98425, epsilon = 1e-5);
        assert_relative_eq!(post.map.bernoullis[0].existence, oracle, max_relative = 1e-9);
        assert_eq!(post.map.bernoullis[0].label, Label(1));
    }

    #[test]
    fn missed_bernoulli_existence() {
        let cfg = FilterConfig {
            p_detect: 0.95,
            fov_radius: 1e6,
            ..FilterConfig::default()
        };
        let map = PmbState {
            poisson: PoissonProcess::default(),
            bernoullis: vec![BernoulliComponent::gaussian(0.5, Gaussian::isotropic(&[1.0, 1.0], 0.01), Label(1)).unwrap()],
        };
        let pred = posterior(single_particle([0.0, 0.0]), map, 1);
        let (post, _) = update(&pred, &[], None, &cfg, &mut stream(3, "t")).unwrap();
        // Hypotheses: absent (0.5) or present and missed (0.5 * 0.05).
        let oracle = 0.5 * 0.05 / (0.5 + 0.5 * 0.05);
        assert_relative_eq!(oracle, 0.047619, epsilon = 1e-6);
        assert_relative_eq!(post.map.bernoullis[0].existence, oracle, max_relative = 1e-12);
    }

    #[test]
    fn extraction_threshold() {
        let g = Gaussian::isotropic(&[0.0, 0.0], 1.0);
        let map = PmbState {
            poisson: PoissonProcess::default(),
            bernoullis: vec![
                BernoulliComponent::gaussian(0.39, g.clone(), Label(1)).unwrap(),
                BernoulliComponent::gaussian(0.41, Gaussian::isotropic(&[7.0, 8.0], 1.0), Label(2)).unwrap(),
            ],
        };
        let post = posterior(single_particle([1.0, 2.0]), map, 2);
        let est = extract_estimates(&post, 0.4).unwrap();
        assert_eq!(est.labels, vec![Label(2)]);
        assert_eq!(est.landmarks, vec![Vector2::new(7.0, 8.0)]);
        assert_eq!(est.sensor.position, Vector2::new(1.0, 2.0));

        let empty = posterior(single_particle([0.0, 0.0]), PmbState::default(), 0);
        assert!(extract_estimates(&empty, 0.4).unwrap().landmarks.is_empty());
    }

    #[test]
    fn one_heavy_particle_is_the_estimate() {
        let states = vec![Vector4::new(1.0, 1.0, 0.0, 0.0), Vector4::new(9.0, -3.0, 1.0, 2.0)];
        let belief = ParticleBelief {
            states,
            log_weights: vec![f64::NEG_INFINITY, 0.0],
        };
        let post = posterior(belief, PmbState::default(), 0);
        let est = extract_estimates(&post, 0.4).unwrap();
        assert_eq!(est.sensor.to_vector(), Vector4::new(9.0, -3.0, 1.0, 2.0));
    }

    #[test]
    fn empty_particle_set_fails_with_time_index() {
        let pred = SlamPosterior {
            sensor: ParticleBelief::uniform(Vec::new()),
            map: PmbState::default(),
            time_index: 7,
            last_label: 0,
        };
        let err = update(&pred, &[], None, &FilterConfig::default(), &mut stream(4, "t")).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { time_index: 7, .. }));
    }

    #[test]
    fn mb_prediction_appends_birth_bernoullis() {
        let cfg = FilterConfig {
            map_model: MapModel::Mb,
            particle_count: 3,
            ..FilterConfig::default()
        };
        let prev = posterior(single_particle([0.0, 0.0]), PmbState::default(), 4);
        let hints = [Vector2::new(1.0, 1.0), Vector2::new(2.0, 2.0)];
        let input = BirthInput {
            hints: &hints,
            measurements: &[],
        };
        let pred = predict(&prev, &cfg, &input, &mut stream(5, "t")).unwrap();
        assert_eq!(pred.map.poisson.mass(), 0.0);
        let labels: Vec<_> = pred.map.bernoullis.iter().map(|b| b.label).collect();
        assert_eq!(labels, vec![Label(5), Label(6)]);
        assert!(pred.map.bernoullis.iter().all(|b| b.existence == 0.95));
    }

    #[test]
    fn pmb_uninformative_birth_weights() {
        let cfg = FilterConfig {
            birth: BirthModel::uninformative(),
            ..FilterConfig::default()
        };
        let prev = posterior(single_particle([0.0, 0.0]), PmbState::default(), 0);
        let meas = [Vector2::new(1.0, 1.0), Vector2::new(-4.0, 2.0), Vector2::new(0.0, 9.0)];
        let input = BirthInput {
            hints: &[],
            measurements: &meas,
        };
        let pred = predict(&prev, &cfg, &input, &mut stream(6, "t")).unwrap();
        assert_eq!(pred.map.poisson.intensity.len(), 3);
        for c in &pred.map.poisson.intensity.components {
            assert_relative_eq!(c.weight(), 1e-3, max_relative = 1e-12);
        }
    }

    #[test]
    fn deterministic_prediction_without_noise() {
        let mut cfg = FilterConfig {
            p_survive: 1.0,
            ..FilterConfig::default()
        };
        cfg.motion.accel_std = 0.0;
        let b = BernoulliComponent::gaussian(0.4, Gaussian::isotropic(&[3.0, 3.0], 2.0), Label(1)).unwrap();
        let map = PmbState {
            poisson: PoissonProcess::default(),
            bernoullis: vec![b],
        };
        let prev = SlamPosterior {
            sensor: ParticleBelief::uniform(vec![Vector4::new(0.0, 0.0, 2.0, -1.0)]),
            map,
            time_index: 0,
            last_label: 1,
        };
        let input = BirthInput {
            hints: &[],
            measurements: &[],
        };
        let pred = predict(&prev, &cfg, &input, &mut stream(7, "t")).unwrap();
        assert_eq!(pred.map.bernoullis, prev.map.bernoullis);
        assert_eq!(pred.sensor.states[0], cfg.motion.transition() * prev.sensor.states[0]);
    }

    #[test]
    fn dead_reckoning_without_detections() {
        let cfg = FilterConfig {
            p_detect: 0.0,
            clutter_intensity: 0.0,
            particle_count: 50,
            ..FilterConfig::default()
        };
        let mut rng = stream(8, "filter");
        let mut post = SlamPosterior::initial(&Vector4::new(0.0, 0.0, 1.0, 2.0), &(Matrix4::identity() * 0.1), &cfg, &mut rng).unwrap();
        let mut reference = post.sensor.states.clone();
        let mut reference_rng = rng.clone();
        let transition = cfg.motion.transition();
        let input = cfg.motion.input();
        for _ in 0..10 {
            post = step(&post, &[], &[], &cfg, &mut rng).unwrap().0;
            for s in reference.iter_mut() {
                let accel = Vector2::new(
                    cfg.motion.accel_std * reference_rng.sample::<f64, _>(StandardNormal),
                    cfg.motion.accel_std * reference_rng.sample::<f64, _>(StandardNormal),
                );
                *s = transition * *s + input * accel;
            }
        }
        assert_eq!(post.sensor.states, reference);
        assert!(post.map.bernoullis.is_empty());
        assert_eq!(post.time_index, 10);
    }

    fn random_case(seed: u64) -> (SlamPosterior, Vec<Vector2<f64>>) {
        let mut rng = stream(seed, "case");
        let n_particles = rng.random_range(1..8);
        let states = (0..n_particles)
            .map(|_| Vector4::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0, 0.0))
            .collect();
        let mut intensity = GaussianMixture::new();
        for _ in 0..rng.random_range(0..3) {
            let mean = [rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0)];
            intensity.push(rng.random_range(0.01..1.0), Gaussian::isotropic(&mean, rng.random_range(0.01..50.0))).unwrap();
        }
        let mut bernoullis = Vec::new();
        for label in 1..=rng.random_range(0..4u32) {
            let mean = [rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0)];
            let g = Gaussian::isotropic(&mean, rng.random_range(0.01..5.0));
            bernoullis.push(BernoulliComponent::gaussian(rng.random_range(0.0..1.0), g, Label(label)).unwrap());
        }
        let last_label = bernoullis.len() as u32 + rng.random_range(0..5);
        let measurements = (0..rng.random_range(0..5))
            .map(|_| Vector2::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0)))
            .collect();
        let map = PmbState {
            poisson: PoissonProcess::undetected(intensity),
            bernoullis,
        };
        (posterior(ParticleBelief::uniform(states), map, last_label), measurements)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn update_invariants(seed in any::<u64>()) {
            let (pred, measurements) = random_case(seed);
            let cfg = FilterConfig {
                bernoulli_prune_threshold: 0.0,
                ..FilterConfig::default()
            };
            let (post, _) = update(&pred, &measurements, None, &cfg, &mut stream(seed, "u")).unwrap();

            for b in &post.map.bernoullis {
                prop_assert!((0.0..=1.0).contains(&b.existence));
            }
            let total = log_sum_exp(post.sensor.log_weights.iter().copied());
            prop_assert!(total.abs() < 1e-9);

            // New labels follow the previous high-water mark in measurement order.
            let new: Vec<u32> = post.map.bernoullis[pred.map.bernoullis.len()..].iter().map(|b| b.label.0).collect();
            let expected: Vec<u32> = (1..=measurements.len() as u32).map(|j| pred.last_label + j).collect();
            if pred.map.poisson.mass() > 0.0 {
                prop_assert_eq!(new, expected);
            }
            prop_assert_eq!(post.last_label, pred.last_label + measurements.len() as u32);
            let labels: Vec<u32> = post.map.bernoullis.iter().map(|b| b.label.0).collect();
            prop_assert!(labels.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn baseline_map_matches_full_filter(seed in any::<u64>()) {
            let (pred, measurements) = random_case(seed);
            let full = FilterConfig::default();
            let baseline = FilterConfig {
                use_new_target_sensor_messages: false,
                ..FilterConfig::default()
            };
            let (a, _) = update(&pred, &measurements, None, &full, &mut stream(seed, "u")).unwrap();
            let (b, _) = update(&pred, &measurements, None, &baseline, &mut stream(seed, "u")).unwrap();
            prop_assert_eq!(a.map, b.map);
        }
    }

}
